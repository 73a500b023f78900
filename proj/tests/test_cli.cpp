#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <sstream>
#include <string>

#include "doctest.h"
#include "support.hpp"

namespace {

struct Outcome {
  int code = -1;
  std::string output;  ///< stdout and stderr interleaved
};

Outcome cli(const std::string& args) {
  const std::string cmd = std::string(SSDCASCADE_PATH) + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) o.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

bool has(const Outcome& o, const std::string& s) { return o.output.find(s) != std::string::npos; }

std::string corpus(const testing::TempDir& dir, int speakers = 16) {
  const auto o = cli("make-synthetic --out " + (dir / "data").string() + " --speakers " + std::to_string(speakers) +
                     " --clips 4");
  REQUIRE(o.code == 0);
  return (dir / "data/manifest.jsonl").string();
}

}  // namespace

TEST_CASE("help, version and usage errors") {
  auto o = cli("--help");
  CHECK(o.code == 0);
  CHECK(has(o, "split"));
  CHECK(has(o, "asr-eval"));
  o = cli("run --help");
  CHECK(o.code == 0);
  CHECK(has(o, "--mode"));
  CHECK(cli("--version").code == 0);
  CHECK(cli("run --no-such-flag").code == 2);
  CHECK(cli("").code == 2);
  CHECK(cli("run --mode sideways").code == 2);
  CHECK(cli("split").code == 2);  // --manifest is required
}

TEST_CASE("split") {
  testing::TempDir dir("cli_split");
  const std::string m = corpus(dir);
  const std::string a = (dir / "a.json").string(), b = (dir / "b.json").string();
  auto o = cli("split --manifest " + m + " --seed 7 --out " + a);
  CHECK(o.code == 0);
  CHECK(has(o, "train"));
  CHECK(cli("split --manifest " + m + " --seed 7 --out " + b).code == 0);
  CHECK(testing::read_text(a) == testing::read_text(b));
  CHECK(cli("split --manifest " + m + " --ratios 0.5,0.5,0.5").code == 2);

  // Two speakers cannot fill three splits.
  testing::write_text(dir / "two.jsonl",
                      R"({"id": "a", "audio_path": "a.wav", "speaker_id": "s1", "t1_label": "typical"})"
                      "\n"
                      R"({"id": "b", "audio_path": "b.wav", "speaker_id": "s2", "t1_label": "disordered", "t2_label": "articulation", "t3_label": "addition"})"
                      "\n");
  o = cli("split --manifest " + (dir / "two.jsonl").string());
  CHECK(o.code == 3);
  CHECK(has(o, "fewer than 3 speakers"));
  CHECK(cli("split --manifest " + (dir / "missing.jsonl").string()).code == 3);
}

TEST_CASE("asr-eval") {
  testing::TempDir dir("cli_asr");
  testing::write_text(dir / "same.jsonl", R"({"id": "1", "reference": "the cat sat", "hypothesis": "the cat sat"})"
                                          "\n");
  auto o = cli("asr-eval --pairs " + (dir / "same.jsonl").string() + " --out " + (dir / "r.json").string());
  CHECK(o.code == 0);
  CHECK(has(o, "wer         0.0000"));
  CHECK(testing::read_text(dir / "r.json").find("\"wer\": 0.0") != std::string::npos);

  testing::write_text(dir / "vowel.jsonl",
                      R"({"id": "1", "reference": "the cat sat", "hypothesis": "the cat sat"})"
                      "\n"
                      R"({"id": "2", "reference": "close-front-round-vowel post-test no-context", "hypothesis": "x"})"
                      "\n");
  o = cli("asr-eval --exclude-vowel-descriptions --pairs " + (dir / "vowel.jsonl").string());
  CHECK(o.code == 0);
  CHECK(has(o, "removed 1 utterance(s)"));

  testing::write_text(dir / "empty.jsonl", "");
  o = cli("asr-eval --pairs " + (dir / "empty.jsonl").string());
  CHECK(o.code == 3);
  CHECK(has(o, "no utterances"));
}

TEST_CASE("run, search and augment") {
  testing::TempDir dir("cli_run");
  const std::string m = corpus(dir, 20);
  const std::string out = (dir / "out").string();
  auto o = cli("run --manifest " + m + " --mode both --seeds 3 --epochs 4 --out " + out);
  REQUIRE(o.code == 0);
  CHECK(has(o, "Δ F1"));
  CHECK(has(o, "trainer invocations: 15"));
  for (int s = 0; s < 3; ++s) CHECK(std::filesystem::exists(dir / ("out/runs/exp_seed" + std::to_string(s) + ".jsonl")));

  // External probabilities: every record gets a confident correct T1 answer.
  std::string probs;
  for (const auto& line : [&] {
         std::vector<std::string> lines;
         std::istringstream in(testing::read_text(m));
         for (std::string l; std::getline(in, l);) lines.push_back(l);
         return lines;
       }()) {
    const bool dis = line.find("\"t1_label\":\"disordered\"") != std::string::npos;
    const auto id_at = line.find("\"id\":\"") + 6;
    const std::string id = line.substr(id_at, line.find('"', id_at) - id_at);
    probs += "{\"id\": \"" + id + "\", \"task\": \"T1\", \"probs\": " + (dis ? "[0.1, 0.9]" : "[0.9, 0.1]") + "}\n";
  }
  testing::write_text(dir / "probs.jsonl", probs);
  o = cli("run --manifest " + m + " --tasks T1 --seeds 2 --probs " + (dir / "probs.jsonl").string() + " --out " +
          (dir / "ext").string());
  REQUIRE(o.code == 0);
  CHECK(has(o, "trainer invocations: 0"));
  CHECK(has(o, "1.000 ± 0.000"));

  const std::string hist = (dir / "h.jsonl").string();
  o = cli("search --manifest " + m + " --strategy random --budget 1 --epochs 2 --history " + hist + " --out " + out);
  REQUIRE(o.code == 0);
  CHECK(has(o, "trials: 1"));
  o = cli("search --manifest " + m + " --strategy random --budget 2 --epochs 2 --history " + hist + " --out " + out);
  REQUIRE(o.code == 0);
  CHECK(has(o, "trials: 2"));
  CHECK(cli("search --manifest " + m + " --strategy grid").code == 2);

  o = cli("augment --manifest " + m + " --noise-prob 1 --noise-max 0.01 --out " + (dir / "aug").string());
  CHECK(o.code == 0);
  CHECK(has(o, "wrote 80 clips"));
  CHECK(cli("augment --manifest " + m + " --pitch-prob 1.5").code == 2);
}

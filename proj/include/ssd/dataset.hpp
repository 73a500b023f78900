#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ssd/error.hpp"
#include "ssd/rng.hpp"

namespace ssd {

enum class Task { t1, t2, t3 };
enum class Gender { female, male, unknown };
enum class Split { train, val, test };

inline constexpr std::array<Task, 3> kAllTasks{Task::t1, Task::t2, Task::t3};
inline constexpr std::array<Split, 3> kAllSplits{Split::train, Split::val, Split::test};

std::string_view to_string(Task t) noexcept;
std::string_view to_string(Gender g) noexcept;
std::string_view to_string(Split s) noexcept;
std::optional<Task> parse_task(std::string_view s) noexcept;
std::optional<Gender> parse_gender(std::string_view s) noexcept;

/// Ordered class list for one task. A "flat" space (T2/T3 only) prepends
/// "typical" so a single model can be trained on every record of the corpus.
struct LabelSpace {
  Task task = Task::t1;
  std::vector<std::string> classes;
  bool includes_typical = false;

  static LabelSpace of(Task task);
  static LabelSpace flat(Task task);

  std::size_t size() const noexcept { return classes.size(); }
  int index_of(std::string_view name) const noexcept;
  /// "T2" or "T2+typical".
  std::string name() const;
  bool operator==(const LabelSpace&) const = default;
};

namespace t1 {
inline constexpr int typical = 0;
inline constexpr int disordered = 1;
}  // namespace t1

struct SampleRecord {
  std::string id;
  std::string audio_path;
  std::string speaker_id;
  Gender gender = Gender::unknown;
  int t1_label = t1::typical;
  std::optional<int> t2_label;  ///< index into LabelSpace::of(Task::t2)
  std::optional<int> t3_label;  ///< index into LabelSpace::of(Task::t3)
  std::optional<std::string> transcript;

  bool disordered() const noexcept { return t1_label == t1::disordered; }
  bool operator==(const SampleRecord&) const = default;
};

/// Gold class index of `r` in `space`, or nullopt when the record carries no
/// label for that task (e.g. a typical record in the plain T2 space).
std::optional<int> gold_label(const SampleRecord& r, const LabelSpace& space) noexcept;

class ManifestError : public Error {
 public:
  ManifestError(std::size_t line, const std::string& what)
      : Error(ErrorKind::data, "manifest line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

nlohmann::json to_json(const SampleRecord& r);
/// Validates one manifest object; `line` is only used for error messages.
SampleRecord record_from_json(const nlohmann::json& j, std::size_t line);

std::vector<SampleRecord> parse_manifest(std::istream& in);
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records);

struct SplitRatios {
  double train = 0.64;
  double val = 0.16;
  double test = 0.20;
  double operator[](Split s) const noexcept;
};

struct SplitAssignment {
  std::map<std::string, Split> speakers;
  SplitRatios ratios;
  std::uint64_t seed = 0;

  /// Throws if the record's speaker is unassigned.
  Split of(const SampleRecord& r) const;
};

/// Speaker-disjoint, stratified partition.
///
/// Speakers are ordered by a seeded shuffle of their sorted ids, then stably by
/// record count (largest first). First a coverage pass walks every
/// (task label x gender) cell with at least three speakers, rarest first, and
/// places its smallest unassigned speaker into each split that lacks the cell.
/// The remaining speakers go, largest first, into the split whose record count
/// is furthest below its target.
SplitAssignment split(const std::vector<SampleRecord>& records, const SplitRatios& ratios, std::uint64_t seed);

/// Records partitioned by assignment, input order kept within each split.
std::array<std::vector<SampleRecord>, 3> apply_split(const std::vector<SampleRecord>& records,
                                                     const SplitAssignment& assignment);

/// Per split, counts keyed "T1:disordered:female" etc.
std::map<Split, std::map<std::string, int>> cell_counts(const std::vector<SampleRecord>& records,
                                                        const SplitAssignment& assignment);

nlohmann::json to_json(const SplitAssignment& a, const std::vector<SampleRecord>& records);
SplitAssignment split_from_json(const nlohmann::json& j);

std::vector<SampleRecord> filter_pathological(const std::vector<SampleRecord>& records);

/// w_c = N / (K * n_c), over records that carry a label in `space`.
std::vector<double> class_weights(const std::vector<SampleRecord>& records, const LabelSpace& space);

/// Every record of a non-majority class is repeated `multiplier` times; the
/// majority class (largest count, lowest index on ties) and unlabeled records
/// appear once. The result is shuffled with `rng`.
std::vector<SampleRecord> oversample(const std::vector<SampleRecord>& records, const LabelSpace& space, int multiplier,
                                     Rng& rng);

}  // namespace ssd

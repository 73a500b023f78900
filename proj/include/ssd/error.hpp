#pragma once

#include <stdexcept>
#include <string>

namespace ssd {

/// Coarse error category. Mirrors the process exit codes of the CLI.
enum class ErrorKind { usage = 2, data = 3, runtime = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) { return Error(ErrorKind::usage, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }
inline Error runtime_error(const std::string& what) { return Error(ErrorKind::runtime, what); }

}  // namespace ssd

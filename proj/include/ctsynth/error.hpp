#pragma once

#include <stdexcept>
#include <string>

namespace ctsynth {

/// Broad failure classes. The CLI maps them onto exit codes.
enum class ErrorKind {
  usage,      // bad arguments or configuration
  shape,      // tensor/volume shape contract violated
  data,       // malformed or missing input files
  numerical,  // non-finite values or divergence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace ctsynth

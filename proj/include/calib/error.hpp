#pragma once

#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace calib {

// All recoverable failures (bad input, shape mismatch, malformed files)
// surface as calib::Error. The CLI turns these into a single
// "error: <message>" line and a nonzero exit code.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

template <class... Args>
[[noreturn]] void fail(Args&&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw Error(os.str());
}

template <class... Args>
void require(bool cond, Args&&... parts) {
  if (!cond) fail(std::forward<Args>(parts)...);
}

// Non-fatal diagnostics go to stderr so stdout stays machine-readable.
template <class... Args>
void warn(Args&&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  std::cerr << "warning: " << os.str() << "\n";
}

}  // namespace calib

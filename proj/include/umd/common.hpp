#ifndef UMD_COMMON_HPP_
#define UMD_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace umd {

// Thrown when an operation's preconditions are violated.
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what)
      : std::invalid_argument(what) {}
};

#define UMD_REQUIRE(cond, msg)                        \
  do {                                                \
    if (!(cond)) throw ::umd::ContractViolation(msg); \
  } while (0)

inline constexpr const char* kVersion = "umdepth 0.1.0";

}  // namespace umd

#endif  // UMD_COMMON_HPP_

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace delaycast {

// Error classes map 1:1 onto process exit codes (see the CLI): data errors
// exit 2, numerical failures exit 3, usage errors exit 4.
enum class Errc { data = 2, numeric = 3, usage = 4 };

class Error : public std::runtime_error {
 public:
  Error(Errc cls, std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), cls_(cls), kind_(std::move(kind)) {}

  Errc cls() const { return cls_; }
  // Stable machine-checkable tag, e.g. "NegativeIncrement", "RankDeficient".
  const std::string& kind() const { return kind_; }

 private:
  Errc cls_;
  std::string kind_;
};

}  // namespace delaycast

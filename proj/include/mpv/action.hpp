#ifndef MPV_ACTION_HPP_
#define MPV_ACTION_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace mpv {

enum class Lateral { kLeft = 0, kStraight = 1, kRight = 2 };
enum class Longitudinal { kFast = 0, kSlow = 1, kStop = 2 };

inline constexpr int kActionCount = 9;

// One of the nine discrete driving commands. Encoded as lateral*3 + longitudinal,
// so (left, fast) = 0 and (right, stop) = 8.
struct Action {
  Lateral lateral = Lateral::kStraight;
  Longitudinal longitudinal = Longitudinal::kFast;

  int index() const { return static_cast<int>(lateral) * 3 + static_cast<int>(longitudinal); }

  static Action from_index(int i) {
    if (i < 0 || i >= kActionCount) throw std::out_of_range("action index out of range: " + std::to_string(i));
    return {static_cast<Lateral>(i / 3), static_cast<Longitudinal>(i % 3)};
  }

  friend bool operator==(const Action&, const Action&) = default;
};

inline std::string_view to_string(Lateral l) {
  switch (l) {
    case Lateral::kLeft: return "left";
    case Lateral::kStraight: return "straight";
    case Lateral::kRight: return "right";
  }
  return "?";
}

inline std::string_view to_string(Longitudinal l) {
  switch (l) {
    case Longitudinal::kFast: return "fast";
    case Longitudinal::kSlow: return "slow";
    case Longitudinal::kStop: return "stop";
  }
  return "?";
}

inline std::string to_string(const Action& a) {
  return "(" + std::string(to_string(a.lateral)) + ", " + std::string(to_string(a.longitudinal)) + ")";
}

}  // namespace mpv

#endif  // MPV_ACTION_HPP_

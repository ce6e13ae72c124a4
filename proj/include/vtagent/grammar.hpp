#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace vtagent {

struct SelectKeyframes {
  std::vector<std::int64_t> frame_ids;
  bool operator==(const SelectKeyframes&) const = default;
};

struct Answer {
  std::string text;
  bool operator==(const Answer&) const = default;
};

using Action = std::variant<SelectKeyframes, Answer>;

struct Turn {
  std::string reasoning;
  Action action;
  std::string raw;
};

struct DroppedId {
  std::int64_t raw_id;
  std::string reason;
  bool operator==(const DroppedId&) const = default;
};

struct KeyframeSet {
  std::vector<int> ids;
  std::vector<DroppedId> dropped;
  bool operator==(const KeyframeSet&) const = default;
};

inline bool is_select(const Action& a) { return std::holds_alternative<SelectKeyframes>(a); }
inline bool is_answer(const Action& a) { return std::holds_alternative<Answer>(a); }

// Throws MissingActionBlock or UnparsableAction; never anything else.
Turn parse_turn(std::string_view text);
Action parse_action(std::string_view payload);

// Drops out-of-range ids and duplicates, then truncates to `cap`.
// Throws EmptySelection when nothing survives.
KeyframeSet validate_keyframes(const SelectKeyframes& action, int frame_count, int cap);

std::string render_action(const Action& action);
std::string render_turn(const Turn& turn);

std::string trim(std::string_view s);

}  // namespace vtagent

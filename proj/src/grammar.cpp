#include "vtagent/grammar.hpp"

#include <algorithm>
#include <charconv>
#include <optional>
#include <unordered_set>

#include "vtagent/error.hpp"

namespace vtagent {

namespace {

constexpr std::string_view kWhitespace = " \t\n\r\f\v";

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

struct Block {
  std::size_t content_begin;
  std::size_t content_end;
  std::size_t end;  // one past the closing tag
};

// First <tag> ... closer, where the closer is </tag> or a repeated <tag>,
// whichever comes first. `lower` is the ASCII-lowercased text.
std::optional<Block> find_block(const std::string& lower, std::string_view tag, std::size_t from) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  const auto open_pos = lower.find(open, from);
  if (open_pos == std::string::npos) return std::nullopt;
  const auto begin = open_pos + open.size();
  const auto close_pos = lower.find(close, begin);
  const auto reopen_pos = lower.find(open, begin);
  if (close_pos == std::string::npos && reopen_pos == std::string::npos) return std::nullopt;
  if (close_pos <= reopen_pos) return Block{begin, close_pos, close_pos + close.size()};
  return Block{begin, reopen_pos, reopen_pos + open.size()};
}

std::optional<std::int64_t> parse_frame_id(std::string_view item) {
  std::string t = trim(item);
  std::string_view v = t;
  if (!v.empty() && (v.front() == 'F' || v.front() == 'f')) v.remove_prefix(1);
  if (v.empty()) return std::nullopt;
  std::int64_t value = 0;
  const auto* first = v.data();
  const auto* last = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

Action parse_select_payload(std::string_view rest, std::string_view payload) {
  const std::string body = trim(rest);
  const auto fail = [&] { return UnparsableAction(std::string(payload), ""); };
  if (body.empty() || body.front() != '[') throw fail();
  const auto close = body.find(']');
  if (close == std::string::npos) throw fail();
  const std::string inner = trim(std::string_view(body).substr(1, close - 1));
  if (inner.empty()) throw fail();

  SelectKeyframes sel;
  std::size_t start = 0;
  while (true) {
    const auto comma = inner.find(',', start);
    const auto item = std::string_view(inner).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    auto id = parse_frame_id(item);
    if (!id) throw fail();
    sel.frame_ids.push_back(*id);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return sel;
}

}  // namespace

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(kWhitespace);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kWhitespace);
  return std::string(s.substr(b, e - b + 1));
}

Action parse_action(std::string_view payload) {
  const std::string t = trim(payload);
  const std::string lower = ascii_lower(t);
  for (std::string_view prefix : {"select key frames:", "select key frame:"}) {
    if (lower.starts_with(prefix))
      return parse_select_payload(std::string_view(t).substr(prefix.size()), payload);
  }
  constexpr std::string_view kAnswer = "answer:";
  if (lower.starts_with(kAnswer)) {
    std::string text = trim(std::string_view(t).substr(kAnswer.size()));
    if (text.empty()) throw UnparsableAction(std::string(payload), "");
    return Answer{std::move(text)};
  }
  throw UnparsableAction(std::string(payload), "");
}

Turn parse_turn(std::string_view text) {
  const std::string lower = ascii_lower(text);
  Turn turn;
  turn.raw = std::string(text);

  std::size_t action_from = 0;
  if (auto r = find_block(lower, "reasoning", 0)) {
    turn.reasoning = std::string(text.substr(r->content_begin, r->content_end - r->content_begin));
    action_from = r->end;
  }
  auto a = find_block(lower, "action", action_from);
  if (!a && action_from > 0) a = find_block(lower, "action", 0);
  if (!a) throw MissingActionBlock(turn.raw);

  const auto payload = text.substr(a->content_begin, a->content_end - a->content_begin);
  try {
    turn.action = parse_action(payload);
  } catch (const UnparsableAction& e) {
    throw UnparsableAction(e.payload, turn.raw);
  }
  return turn;
}

KeyframeSet validate_keyframes(const SelectKeyframes& action, int frame_count, int cap) {
  KeyframeSet out;
  std::unordered_set<std::int64_t> seen;
  for (auto id : action.frame_ids) {
    if (id < 0 || id >= frame_count) {
      out.dropped.push_back({id, "out-of-range"});
    } else if (!seen.insert(id).second) {
      out.dropped.push_back({id, "duplicate"});
    } else if (static_cast<int>(out.ids.size()) >= cap) {
      out.dropped.push_back({id, "over-cap"});
    } else {
      out.ids.push_back(static_cast<int>(id));
    }
  }
  if (out.ids.empty()) throw EmptySelection();
  return out;
}

std::string render_action(const Action& action) {
  if (const auto* sel = std::get_if<SelectKeyframes>(&action)) {
    std::string s = "select key frame: [";
    for (std::size_t i = 0; i < sel->frame_ids.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(sel->frame_ids[i]);
    }
    return s + "]";
  }
  return "answer: " + std::get<Answer>(action).text;
}

std::string render_turn(const Turn& turn) {
  return "<reasoning>" + turn.reasoning + "</reasoning>\n<action>" + render_action(turn.action) +
         "</action>";
}

}  // namespace vtagent

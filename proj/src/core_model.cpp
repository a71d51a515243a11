#include "hila/core_model.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace hila {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_word(char c) { return is_alpha(c) || is_digit(c) || c == '_'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::optional<std::string_view> final_nonempty_line(std::string_view text) {
  const auto lines = split_lines(text);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    auto t = trim(*it);
    if (!t.empty()) return t;
  }
  return std::nullopt;
}

bool valid_thousands_grouping(std::string_view digits_and_commas) {
  // First group 1-3 digits, then groups of exactly three.
  std::size_t pos = digits_and_commas.find(',');
  if (pos == 0 || pos > 3) return false;
  while (pos != std::string_view::npos) {
    const std::size_t next = digits_and_commas.find(',', pos + 1);
    const std::size_t len = (next == std::string_view::npos ? digits_and_commas.size() : next) - pos - 1;
    if (len != 3) return false;
    pos = next;
  }
  return true;
}

// Candidate numeric tokens of one line, left to right.
std::vector<std::string> numeric_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const bool starts_number =
        is_digit(line[i]) || (line[i] == '.' && i + 1 < line.size() && is_digit(line[i + 1]));
    if (!starts_number) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    std::size_t end = i;
    while (end < line.size() && (is_digit(line[end]) || line[end] == ',' || line[end] == '.')) ++end;
    // Glued to a word on the left ("x2") or right ("42nd") means not standalone.
    const bool left_ok = begin == 0 || !is_word(line[begin - 1]);
    const bool right_ok = end == line.size() || !is_alpha(line[end]);
    std::string_view run = line.substr(begin, end - begin);
    while (!run.empty() && (run.back() == '.' || run.back() == ',')) run.remove_suffix(1);
    i = end;
    if (!left_ok || !right_ok || run.empty()) continue;

    const bool negative = begin > 0 && line[begin - 1] == '-' &&
                          (begin == 1 || !is_word(line[begin - 2]));
    const auto dot = run.find('.');
    const std::string_view int_part = run.substr(0, dot);
    if (int_part.find(',') != std::string_view::npos && !valid_thousands_grouping(int_part)) {
      // "1,2,3" is a list, not a number.
      std::size_t s = 0;
      while (s <= run.size()) {
        std::size_t c = run.find(',', s);
        auto piece = run.substr(s, c == std::string_view::npos ? std::string_view::npos : c - s);
        if (!piece.empty()) out.emplace_back(piece);
        if (c == std::string_view::npos) break;
        s = c + 1;
      }
      continue;
    }
    std::string token = negative ? "-" : "";
    token += run;
    out.push_back(std::move(token));
  }
  return out;
}

std::optional<std::string> extract_boxed(std::string_view text) {
  static constexpr std::string_view kBoxed = "\\boxed{";
  const std::size_t pos = text.rfind(kBoxed);
  if (pos == std::string_view::npos) return std::nullopt;
  std::size_t i = pos + kBoxed.size();
  int depth = 1;
  const std::size_t start = i;
  for (; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    else if (text[i] == '}' && --depth == 0) break;
  }
  if (depth != 0) return std::nullopt;
  auto payload = trim(text.substr(start, i - start));
  if (payload.empty()) return std::nullopt;
  if (auto num = canonicalize_number(payload)) return num;
  return std::string(payload);
}

std::optional<std::string> normalize_boxed(std::string_view raw) {
  if (raw.find("\\boxed") != std::string_view::npos) return extract_boxed(raw);
  // An already-normalized payload: a single non-empty line.
  auto t = trim(raw);
  if (t.empty() || t.find('\n') != std::string_view::npos) return std::nullopt;
  if (auto num = canonicalize_number(t)) return num;
  return std::string(t);
}

std::optional<std::string> normalize_numeric(std::string_view raw) {
  auto line = final_nonempty_line(raw);
  if (!line) return std::nullopt;
  auto tokens = numeric_tokens(*line);
  for (auto it = tokens.rbegin(); it != tokens.rend(); ++it) {
    if (auto c = canonicalize_number(*it)) return c;
  }
  return std::nullopt;
}

bool is_option_letter(char c) {
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return u >= 'A' && u <= 'J';
}

std::string upper_letter(char c) {
  return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
}

std::string_view strip_punct(std::string_view s) {
  auto punct = [](char c) { return !is_word(c); };
  while (!s.empty() && punct(s.front())) s.remove_prefix(1);
  while (!s.empty() && punct(s.back())) s.remove_suffix(1);
  return s;
}

std::optional<std::string> normalize_choice(std::string_view raw) {
  auto line_opt = final_nonempty_line(raw);
  if (!line_opt) return std::nullopt;
  const std::string_view line = *line_opt;

  // 1. The whole line is one letter once punctuation is stripped: "(b)", "C.".
  if (auto bare = strip_punct(line); bare.size() == 1 && is_option_letter(bare[0])) {
    return upper_letter(bare[0]);
  }

  // Word tokens with surrounding punctuation removed, remembering the raw form.
  struct Tok {
    std::string_view raw, word;
  };
  std::vector<Tok> toks;
  for (std::size_t i = 0; i < line.size();) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) {
      auto r = line.substr(i, j - i);
      toks.push_back({r, strip_punct(r)});
    }
    i = j;
  }
  auto lower = [](std::string_view w) {
    std::string s(w);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };

  // 2. "answer is X", "answer: X", "option X", "choice X".
  std::optional<std::string> found;
  for (std::size_t k = 0; k < toks.size(); ++k) {
    const std::string w = lower(toks[k].word);
    if (w != "answer" && w != "option" && w != "choice") continue;
    std::size_t n = k + 1;
    if (n < toks.size() && lower(toks[n].word) == "is") ++n;
    if (n < toks.size() && toks[n].word.size() == 1 && is_option_letter(toks[n].word[0])) {
      found = upper_letter(toks[n].word[0]);
    }
  }
  if (found) return found;

  // 3. A lone capital letter A-H; a leading "A" is read as an article.
  for (std::size_t k = toks.size(); k-- > 0;) {
    auto w = toks[k].word;
    if (w.size() != 1) continue;
    const char c = w[0];
    if (c < 'A' || c > 'H') continue;
    if (k == 0 && c == 'A' && toks.size() > 1) continue;
    return std::string(1, c);
  }
  return std::nullopt;
}

std::optional<std::string> normalize_code(std::string_view raw) {
  const auto lines = split_lines(raw);
  std::vector<std::string> blocks;
  std::string current;
  bool in_fence = false;
  for (auto line : lines) {
    auto t = trim(line);
    if (t.starts_with("```")) {
      if (in_fence) {
        blocks.push_back(current);
        current.clear();
      }
      in_fence = !in_fence;
      continue;
    }
    if (in_fence) {
      current.append(line);
      current.push_back('\n');
    }
  }
  if (in_fence) blocks.push_back(current);
  if (!blocks.empty()) {
    std::string body = blocks.back();
    if (!body.empty() && body.back() == '\n') body.pop_back();
    if (trim(body).empty()) return std::nullopt;
    return body;
  }
  if (trim(raw).empty()) return std::nullopt;
  return std::string(raw);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::MathNumeric: return "math-numeric";
    case TaskKind::MathBoxed: return "math-boxed";
    case TaskKind::MultipleChoice: return "multiple-choice";
    case TaskKind::Code: return "code";
    case TaskKind::Generic: return "generic";
  }
  return "generic";
}

TaskKind parse_task_kind(std::string_view text) {
  for (auto k : {TaskKind::MathNumeric, TaskKind::MathBoxed, TaskKind::MultipleChoice, TaskKind::Code,
                 TaskKind::Generic}) {
    if (to_string(k) == text) return k;
  }
  throw std::invalid_argument("unknown task kind: " + std::string(text));
}

void TaskInstance::validate() const {
  if (id.empty()) throw std::invalid_argument("task id must not be empty");
  if (kind == TaskKind::MultipleChoice) {
    if (choices.size() < 2) throw std::invalid_argument("task " + id + ": multiple-choice needs >= 2 choices");
    if (gold && std::find(choices.begin(), choices.end(), *gold) == choices.end()) {
      throw std::invalid_argument("task " + id + ": gold '" + *gold + "' is not one of the choices");
    }
  } else if (!choices.empty()) {
    throw std::invalid_argument("task " + id + ": choices are only allowed for multiple-choice");
  }
  if (difficulty && !(*difficulty >= 0.0 && *difficulty <= 1.0)) {
    throw std::invalid_argument("task " + id + ": difficulty outside [0,1]");
  }
}

std::string_view to_string(ActionType type) {
  switch (type) {
    case ActionType::Eval: return "EVAL";
    case ActionType::Create: return "CREATE";
    case ActionType::Defer: return "DEFER";
  }
  return "CREATE";
}

ActionType parse_action_type(std::string_view text) {
  for (auto t : kAllActionTypes) {
    if (to_string(t) == text) return t;
  }
  throw std::invalid_argument("unknown action type: " + std::string(text));
}

std::string StrategicAction::serialize() const {
  if (type_ == ActionType::Eval) return "EVAL " + std::to_string(target_);
  return std::string(to_string(type_));
}

std::string_view to_string(OutputSource source) {
  switch (source) {
    case OutputSource::SelfGenerated: return "self-generated";
    case OutputSource::CopiedFromPeer: return "copied-from-peer";
    case OutputSource::Expert: return "expert";
  }
  return "self-generated";
}

OutputSource parse_output_source(std::string_view text) {
  for (auto s : {OutputSource::SelfGenerated, OutputSource::CopiedFromPeer, OutputSource::Expert}) {
    if (to_string(s) == text) return s;
  }
  throw std::invalid_argument("unknown output source: " + std::string(text));
}

std::vector<std::optional<std::string>> RoundRecord::answers() const {
  std::vector<std::optional<std::string>> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(a.normalized_answer);
  return out;
}

void ActionCounts::add(ActionType type) {
  switch (type) {
    case ActionType::Eval: ++eval; break;
    case ActionType::Create: ++create; break;
    case ActionType::Defer: ++defer; break;
  }
}

FeatureVector CognitiveState::features() const {
  FeatureVector f{};
  std::size_t k = 0;
  for (const CueVector* cv : {&social, &monitoring, &control}) {
    if (cv->values.size() != cue_length(cv->schema)) {
      throw std::logic_error("cue vector has the wrong length for its schema");
    }
    for (double v : cv->values) f[k++] = v;
  }
  return f;
}

std::optional<std::string> canonicalize_number(std::string_view token) {
  auto t = trim(token);
  bool negative = false;
  if (!t.empty() && (t.front() == '-' || t.front() == '+')) {
    negative = t.front() == '-';
    t.remove_prefix(1);
  }
  if (t.empty()) return std::nullopt;
  std::string int_part, frac_part;
  bool seen_dot = false, any_digit = false;
  for (char c : t) {
    if (is_digit(c)) {
      (seen_dot ? frac_part : int_part).push_back(c);
      any_digit = true;
    } else if (c == ',' && !seen_dot) {
      continue;
    } else if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else {
      return std::nullopt;
    }
  }
  if (!any_digit) return std::nullopt;
  if (t.find(',') != std::string_view::npos && !valid_thousands_grouping(t.substr(0, t.find('.')))) {
    return std::nullopt;
  }
  const auto nz = int_part.find_first_not_of('0');
  int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();
  std::string out = int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

std::optional<std::string> normalize_answer(std::string_view raw, TaskKind kind) {
  switch (kind) {
    case TaskKind::MathBoxed: return normalize_boxed(raw);
    case TaskKind::MathNumeric: return normalize_numeric(raw);
    case TaskKind::MultipleChoice: return normalize_choice(raw);
    case TaskKind::Code: return normalize_code(raw);
    case TaskKind::Generic: {
      auto line = final_nonempty_line(raw);
      if (!line) return std::nullopt;
      return std::string(*line);
    }
  }
  return std::nullopt;
}

std::string aggregate_final(std::span<const std::optional<std::string>> answers) {
  // Blocks in order of first appearance, so a strict '>' keeps the lowest index on ties.
  std::vector<std::pair<std::string, std::size_t>> blocks;
  for (const auto& a : answers) {
    if (!a) continue;
    auto it = std::find_if(blocks.begin(), blocks.end(), [&](const auto& b) { return b.first == *a; });
    if (it == blocks.end()) blocks.emplace_back(*a, 1);
    else ++it->second;
  }
  const std::pair<std::string, std::size_t>* best = nullptr;
  for (const auto& b : blocks) {
    if (!best || b.second > best->second) best = &b;
  }
  return best ? best->first : std::string{};
}

std::string aggregate_final(const RoundRecord& last_round) {
  const auto answers = last_round.answers();
  return aggregate_final(std::span<const std::optional<std::string>>(answers));
}

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : text) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace hila

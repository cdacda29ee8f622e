#pragma once

// Shortcut templates: one or two POS slots (optionally pinned to a word or a
// word set) with an exact token gap between them, plus their matching
// semantics, canonical text form and abstraction lattice.

#include "shortcutlens/corpus.hpp"
#include "shortcutlens/error.hpp"
#include "shortcutlens/hash.hpp"

#include <algorithm>
#include <compare>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace shortcutlens {

struct Slot {
  std::string pos;
  std::optional<std::string> word;
  std::vector<std::string> word_set;  // sorted, unique; aggregates only
  std::string representative;         // member of word_set

  static Slot of(std::string pos) { return Slot{std::move(pos), std::nullopt, {}, {}}; }
  static Slot of(std::string pos, std::string word) { return Slot{std::move(pos), std::move(word), {}, {}}; }
  static Slot of_set(std::string pos, std::vector<std::string> words, std::string representative) {
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    if (words.size() < 2) throw Error("word set needs at least two members");
    if (!std::binary_search(words.begin(), words.end(), representative)) {
      throw Error("representative '" + representative + "' is not in the word set");
    }
    return Slot{std::move(pos), std::nullopt, std::move(words), std::move(representative)};
  }

  bool is_aggregate() const noexcept { return !word_set.empty(); }
  bool has_word() const noexcept { return word.has_value(); }
  Slot pos_only() const { return of(pos); }

  auto operator<=>(const Slot&) const = default;
};

class Template {
public:
  Template() = default;

  static Template single(Slot slot) {
    Template t;
    t.slots_.push_back(std::move(slot));
    return t;
  }
  static Template pair(Slot first, std::size_t gap, Slot second) {
    Template t;
    t.slots_.push_back(std::move(first));
    t.slots_.push_back(std::move(second));
    t.gap_ = gap;
    return t;
  }

  /// The empty template stands for the virtual root of the hierarchy.
  bool is_root() const noexcept { return slots_.empty(); }
  std::size_t arity() const noexcept { return slots_.size(); }
  const std::vector<Slot>& slots() const noexcept { return slots_; }
  const Slot& slot(std::size_t i) const { return slots_.at(i); }
  const Slot& final_slot() const { return slots_.back(); }
  std::optional<std::size_t> gap() const noexcept { return gap_; }

  Template with_slot(std::size_t i, Slot s) const {
    Template t = *this;
    t.slots_.at(i) = std::move(s);
    return t;
  }

  auto operator<=>(const Template&) const = default;

private:
  std::vector<Slot> slots_;
  std::optional<std::size_t> gap_;
};

struct MatchOptions {
  bool case_fold = false;
};

inline std::string ascii_fold(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

inline bool slot_accepts(const Slot& slot, const Token& tok, MatchOptions opt = {}) {
  if (slot.pos != tok.pos) return false;
  if (slot.word) {
    return opt.case_fold ? ascii_fold(*slot.word) == ascii_fold(tok.surface) : *slot.word == tok.surface;
  }
  if (slot.is_aggregate()) {
    if (!opt.case_fold) return std::binary_search(slot.word_set.begin(), slot.word_set.end(), tok.surface);
    auto folded = ascii_fold(tok.surface);
    return std::any_of(slot.word_set.begin(), slot.word_set.end(),
                       [&](const std::string& w) { return ascii_fold(w) == folded; });
  }
  return true;
}

struct MatchSpan {
  std::string instance_id;
  std::vector<std::size_t> indices;  // one token index per slot

  bool operator==(const MatchSpan&) const = default;
};

/// All placements of the template in the token sequence, ordered by the
/// index of the first slot.
inline std::vector<std::vector<std::size_t>> match_positions(const Template& t, std::span<const Token> tokens,
                                                             MatchOptions opt = {}) {
  std::vector<std::vector<std::size_t>> out;
  if (t.is_root()) return out;
  const std::size_t n = tokens.size();
  const std::size_t offset = t.arity() == 2 ? *t.gap() + 1 : 0;
  for (std::size_t p = 0; p + offset < n; ++p) {
    if (!slot_accepts(t.slot(0), tokens[p], opt)) continue;
    if (t.arity() == 1) {
      out.push_back({p});
    } else if (slot_accepts(t.slot(1), tokens[p + offset], opt)) {
      out.push_back({p, p + offset});
    }
  }
  return out;
}

inline std::vector<MatchSpan> match_spans(const Template& t, const AnnotatedInstance& inst, MatchOptions opt = {}) {
  std::vector<MatchSpan> spans;
  for (auto& idx : match_positions(t, inst.tokens, opt)) spans.push_back({inst.id, std::move(idx)});
  return spans;
}

inline bool matches(const Template& t, std::span<const Token> tokens, MatchOptions opt = {}) {
  if (t.is_root()) return true;
  const std::size_t n = tokens.size();
  const std::size_t offset = t.arity() == 2 ? *t.gap() + 1 : 0;
  for (std::size_t p = 0; p + offset < n; ++p) {
    if (slot_accepts(t.slot(0), tokens[p], opt) &&
        (t.arity() == 1 || slot_accepts(t.slot(1), tokens[p + offset], opt))) {
      return true;
    }
  }
  return false;
}

inline bool matches(const Template& t, const AnnotatedInstance& inst, MatchOptions opt = {}) {
  return matches(t, inst.tokens, opt);
}

/// One-step abstractions: drop a word literal or word set (keeping the POS),
/// or, for two-slot templates, drop either slot entirely.
inline std::vector<Template> parents(const Template& t) {
  std::set<Template> out;
  for (std::size_t i = 0; i < t.arity(); ++i) {
    const auto& s = t.slot(i);
    if (s.has_word() || s.is_aggregate()) out.insert(t.with_slot(i, s.pos_only()));
  }
  if (t.arity() == 2) {
    out.insert(Template::single(t.slot(0)));
    out.insert(Template::single(t.slot(1)));
  }
  return {out.begin(), out.end()};
}

/// Strict ancestry in the parents lattice.
inline bool is_ancestor(const Template& a, const Template& b) {
  if (a.arity() > b.arity()) return false;
  std::set<Template> frontier{b};
  std::set<Template> seen;
  while (!frontier.empty()) {
    std::set<Template> next;
    for (const auto& t : frontier) {
      for (auto& p : parents(t)) {
        if (p == a) return true;
        if (seen.insert(p).second) next.insert(std::move(p));
      }
    }
    frontier = std::move(next);
  }
  return false;
}

// Canonical text form --------------------------------------------------------

namespace detail {

inline bool needs_escape(char c) {
  switch (c) {
    case '\\': case '[': case ']': case '{': case '}': case ',': case '=': case ' ': case '\t': case '\n':
      return true;
    default:
      return false;
  }
}

inline void append_escaped(std::string& out, std::string_view s) {
  for (char c : s) {
    if (needs_escape(c)) out.push_back('\\');
    out.push_back(c);
  }
}

inline void append_slot(std::string& out, const Slot& s, bool display) {
  out += "[pos=";
  append_escaped(out, s.pos);
  if (s.word) {
    out += " word=";
    append_escaped(out, *s.word);
  } else if (s.is_aggregate()) {
    out += " words={";
    if (display) {
      append_escaped(out, s.representative);
      out += ",+" + std::to_string(s.word_set.size() - 1);
      out += "}";
    } else {
      for (std::size_t i = 0; i < s.word_set.size(); ++i) {
        if (i) out.push_back(',');
        append_escaped(out, s.word_set[i]);
      }
      out += "} repr=";
      append_escaped(out, s.representative);
    }
  }
  out.push_back(']');
}

inline std::string render(const Template& t, bool display) {
  if (t.is_root()) return "<root>";
  std::string out;
  append_slot(out, t.slot(0), display);
  if (t.arity() == 2) {
    out += " gap=" + std::to_string(*t.gap()) + " ";
    append_slot(out, t.slot(1), display);
  }
  return out;
}

class TemplateReader {
public:
  explicit TemplateReader(std::string_view text) : s_(text) {}

  Template read() {
    if (s_ == "<root>") return {};
    Slot first = slot();
    if (at_end()) return Template::single(std::move(first));
    expect(" gap=");
    std::size_t gap = number();
    expect(" ");
    Slot second = slot();
    if (!at_end()) fail("trailing characters");
    return Template::pair(std::move(first), gap, std::move(second));
  }

private:
  bool at_end() const { return i_ >= s_.size(); }
  [[noreturn]] void fail(const std::string& why) const {
    throw ParseError("bad template '" + std::string(s_) + "' at offset " + std::to_string(i_) + ": " + why);
  }
  void expect(std::string_view lit) {
    if (s_.substr(i_, lit.size()) != lit) fail("expected '" + std::string(lit) + "'");
    i_ += lit.size();
  }
  bool accept(std::string_view lit) {
    if (s_.substr(i_, lit.size()) != lit) return false;
    i_ += lit.size();
    return true;
  }
  std::size_t number() {
    std::size_t start = i_, v = 0;
    while (!at_end() && s_[i_] >= '0' && s_[i_] <= '9') v = v * 10 + static_cast<std::size_t>(s_[i_++] - '0');
    if (i_ == start) fail("expected a number");
    return v;
  }
  std::string atom() {
    std::string out;
    while (!at_end()) {
      char c = s_[i_];
      if (c == '\\') {
        if (i_ + 1 >= s_.size()) fail("dangling escape");
        out.push_back(s_[i_ + 1]);
        i_ += 2;
      } else if (needs_escape(c)) {
        break;
      } else {
        out.push_back(c);
        ++i_;
      }
    }
    if (out.empty()) fail("empty field");
    return out;
  }
  Slot slot() {
    expect("[pos=");
    Slot s = Slot::of(atom());
    if (accept(" word=")) {
      s.word = atom();
    } else if (accept(" words={")) {
      std::vector<std::string> words{atom()};
      while (accept(",")) words.push_back(atom());
      expect("} repr=");
      std::string repr = atom();
      s = Slot::of_set(std::move(s.pos), std::move(words), std::move(repr));
    }
    expect("]");
    return s;
  }

  std::string_view s_;
  std::size_t i_ = 0;
};

}  // namespace detail

/// Canonical form, e.g. `[pos=DET word=The] gap=1 [pos=VERB word=will]`.
/// Aggregate slots list every member: `[pos=PRON words={he,it,she} repr=he]`.
inline std::string to_string(const Template& t) { return detail::render(t, false); }

/// Short form for display; aggregates show the representative and the number
/// of other members: `[pos=PRON words={he,+2}]`.
inline std::string display_string(const Template& t) { return detail::render(t, true); }

inline Template parse_template(std::string_view text) { return detail::TemplateReader(text).read(); }

inline constexpr const char* kRootId = "root";

/// Stable shortcut id: hash of the canonical form.
inline std::string template_id(const Template& t) {
  if (t.is_root()) return kRootId;
  return short_hash(to_string(t));
}

}  // namespace shortcutlens

#include "polyp/report_parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <utility>

namespace polyp {

namespace {

constexpr std::array<std::string_view, 20> kUnitWords = {
    "zero",    "one",     "two",       "three",    "four",     "five",    "six",
    "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
    "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"};

constexpr std::array<std::string_view, 8> kTensWords = {
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"};

bool is_alpha(unsigned char c) { return std::isalpha(c) != 0 || c >= 0x80; }
bool is_digit(unsigned char c) { return std::isdigit(c) != 0; }
bool is_space(unsigned char c) { return std::isspace(c) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<Unit> unit_of(std::string_view word) {
  if (word == "mm") return Unit::Mm;
  if (word == "cm") return Unit::Cm;
  return std::nullopt;
}

bool is_tens(int v) { return v >= 20 && v % 10 == 0; }

// Reads an alphabetic run starting at `pos`; returns its end.
std::size_t alpha_run_end(std::string_view text, std::size_t pos) {
  std::size_t end = pos;
  while (end < text.size()) {
    const auto c = static_cast<unsigned char>(text[end]);
    if (is_alpha(c)) {
      ++end;
    } else if (c == '\'' && end + 1 < text.size() &&
               is_alpha(static_cast<unsigned char>(text[end + 1]))) {
      ++end;
    } else {
      break;
    }
  }
  return end;
}

Token make_token(TokenKind kind, std::string lexeme, std::size_t begin, std::size_t end) {
  Token t;
  t.kind = kind;
  t.lexeme = std::move(lexeme);
  t.span = {begin, end};
  return t;
}

// Compound number word continuation after a tens word: "-five" or " five".
std::optional<std::pair<int, std::size_t>> compound_tail(std::string_view text, std::size_t pos) {
  if (pos >= text.size()) return std::nullopt;
  const char sep = text[pos];
  if (sep != '-' && sep != ' ') return std::nullopt;
  std::size_t start = pos + 1;
  if (start >= text.size() || !is_alpha(static_cast<unsigned char>(text[start]))) {
    return std::nullopt;
  }
  const std::size_t end = alpha_run_end(text, start);
  const auto unit_value = number_word_value(lower(text.substr(start, end - start)));
  if (!unit_value || *unit_value < 1 || *unit_value > 9) return std::nullopt;
  return std::make_pair(*unit_value, end);
}

struct SiteEntry {
  std::string_view first;
  std::string_view second;  // empty for single-word entries
  ColonSite site;
};

// Two-word entries first.
constexpr std::array<SiteEntry, 10> kVocabulary = {{
    {"ileum", "cecum", ColonSite::IleumCecum},
    {"transverse", "", ColonSite::Transverse},
    {"sigmoid", "", ColonSite::Sigmoid},
    {"anus", "", ColonSite::Anus},
    {"ascending", "", ColonSite::Ascending},
    {"descending", "", ColonSite::Descending},
    {"hepatic", "", ColonSite::Hepatic},
    {"rectum", "", ColonSite::Rectum},
    {"ileocecal", "", ColonSite::Ileocecal},
    {"splenic", "", ColonSite::Splenic},
}};

// Returns the site starting at tokens[i] and the number of tokens it spans.
std::optional<std::pair<ColonSite, std::size_t>> match_site(const std::vector<Token>& tokens,
                                                            std::size_t i) {
  if (tokens[i].kind != TokenKind::Word) return std::nullopt;
  for (const auto& entry : kVocabulary) {
    if (tokens[i].lexeme != entry.first) continue;
    if (entry.second.empty()) return std::make_pair(entry.site, std::size_t{1});
    if (i + 1 < tokens.size() && tokens[i + 1].is_word(entry.second)) {
      return std::make_pair(entry.site, std::size_t{2});
    }
  }
  return std::nullopt;
}

bool is_sentence_end(const Token& t) {
  return t.kind == TokenKind::Punct &&
         (t.lexeme == "." || t.lexeme == ";" || t.lexeme == "!" || t.lexeme == "?");
}

bool is_range_marker(const Token& t) { return t.is_punct("-") || t.is_word("to"); }

// Index of the unit token attached to the size number at `index`.
std::optional<std::size_t> unit_after(const std::vector<Token>& tokens, std::size_t index,
                                      std::size_t window) {
  for (std::size_t k = 1; k <= window && index + k < tokens.size(); ++k) {
    const Token& t = tokens[index + k];
    if (t.is_number()) return std::nullopt;
    if (t.is_unit()) return index + k;
  }
  return std::nullopt;
}

double to_mm(double value, Unit unit) { return unit == Unit::Cm ? value * 10.0 : value; }

struct PendingDescription {
  std::optional<int> count;
  std::optional<std::pair<double, double>> size;

  bool empty() const { return !count && !size; }

  PolypMention to_mention(std::optional<ColonSite> site) const {
    PolypMention m;
    m.location = site;
    m.count = count.value_or(1);
    if (size) {
      m.size_min_mm = size->first;
      m.size_max_mm = size->second;
    }
    return m;
  }
};

class SentenceAssembler {
 public:
  explicit SentenceAssembler(std::vector<PolypMention>& out) : out_(out) {}

  void count(int n) {
    if (pending_.count) flush();
    pending_.count = n;
  }

  void size(double lo, double hi) {
    if (pending_.size) flush();
    if (lo > hi) std::swap(lo, hi);
    pending_.size = {lo, hi};
  }

  void site(ColonSite s) {
    if (pending_.empty()) {
      out_.push_back(PendingDescription{}.to_mention(s));
      bare_ = out_.size() - 1;
    } else {
      out_.push_back(pending_.to_mention(s));
      pending_ = {};
    }
  }

  void end_sentence() {
    flush();
    bare_.reset();
  }

 private:
  void flush() {
    if (pending_.empty()) return;
    if (bare_) {
      out_[*bare_] = pending_.to_mention(out_[*bare_].location);
      bare_.reset();
    } else {
      out_.push_back(pending_.to_mention(std::nullopt));
    }
    pending_ = {};
  }

  std::vector<PolypMention>& out_;
  PendingDescription pending_;
  std::optional<std::size_t> bare_;
};

}  // namespace

std::string_view site_name(ColonSite site) {
  switch (site) {
    case ColonSite::Transverse: return "transverse";
    case ColonSite::Sigmoid: return "sigmoid";
    case ColonSite::IleumCecum: return "ileum cecum";
    case ColonSite::Anus: return "anus";
    case ColonSite::Ascending: return "ascending";
    case ColonSite::Descending: return "descending";
    case ColonSite::Hepatic: return "hepatic";
    case ColonSite::Rectum: return "rectum";
    case ColonSite::Ileocecal: return "ileocecal";
    case ColonSite::Splenic: return "splenic";
  }
  return "";
}

std::string_view site_key(ColonSite site) {
  return site == ColonSite::IleumCecum ? "ileum_cecum" : site_name(site);
}

std::optional<ColonSite> site_from_key(std::string_view key) {
  for (ColonSite s : kAllSites) {
    if (site_key(s) == key) return s;
  }
  return std::nullopt;
}

int VisitSummary::located_count() const {
  int n = 0;
  for (const auto& [site, c] : location_counts) n += c;
  return n;
}

bool summaries_match(const VisitSummary& a, const VisitSummary& b, double mean_tol) {
  if (a.polyp_count != b.polyp_count || a.location_counts != b.location_counts) return false;
  if (a.max_size_mm != b.max_size_mm) return false;
  if (a.mean_size_mm.has_value() != b.mean_size_mm.has_value()) return false;
  return !a.mean_size_mm || std::abs(*a.mean_size_mm - *b.mean_size_mm) <= mean_tol;
}

std::optional<int> number_word_value(std::string_view word) {
  for (std::size_t i = 0; i < kUnitWords.size(); ++i) {
    if (kUnitWords[i] == word) return static_cast<int>(i);
  }
  for (std::size_t i = 0; i < kTensWords.size(); ++i) {
    if (kTensWords[i] == word) return static_cast<int>(20 + 10 * i);
  }
  return std::nullopt;
}

std::vector<Token> lex(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
      continue;
    }

    if (is_digit(c)) {
      std::size_t end = i;
      while (end < text.size() && is_digit(static_cast<unsigned char>(text[end]))) ++end;
      if (end + 1 < text.size() && text[end] == '.' &&
          is_digit(static_cast<unsigned char>(text[end + 1]))) {
        ++end;
        while (end < text.size() && is_digit(static_cast<unsigned char>(text[end]))) ++end;
      }
      Token num = make_token(TokenKind::Number, std::string(text.substr(i, end - i)), i, end);
      std::from_chars(text.data() + i, text.data() + end, num.value);
      tokens.push_back(std::move(num));
      i = end;
      // A unit glued to the number ("5mm") becomes its own token.
      if (i < text.size() && is_alpha(static_cast<unsigned char>(text[i]))) {
        const std::size_t word_end = alpha_run_end(text, i);
        std::string word = lower(text.substr(i, word_end - i));
        if (auto unit = unit_of(word)) {
          Token u = make_token(TokenKind::Unit, std::move(word), i, word_end);
          u.unit = *unit;
          tokens.push_back(std::move(u));
        } else {
          tokens.push_back(make_token(TokenKind::Word, std::move(word), i, word_end));
        }
        i = word_end;
      }
      continue;
    }

    if (is_alpha(c)) {
      const std::size_t end = alpha_run_end(text, i);
      std::string word = lower(text.substr(i, end - i));
      if (auto unit = unit_of(word)) {
        Token u = make_token(TokenKind::Unit, std::move(word), i, end);
        u.unit = *unit;
        tokens.push_back(std::move(u));
      } else if (auto value = number_word_value(word)) {
        std::size_t num_end = end;
        int total = *value;
        if (is_tens(total)) {
          if (auto tail = compound_tail(text, end)) {
            total += tail->first;
            num_end = tail->second;
          }
        }
        Token num = make_token(TokenKind::Number, lower(text.substr(i, num_end - i)), i, num_end);
        num.value = total;
        tokens.push_back(std::move(num));
        i = num_end;
        continue;
      } else {
        tokens.push_back(make_token(TokenKind::Word, std::move(word), i, end));
      }
      i = end;
      continue;
    }

    tokens.push_back(make_token(TokenKind::Punct, std::string(1, static_cast<char>(c)), i, i + 1));
    ++i;
  }
  return tokens;
}

NumberRole classify_number(const std::vector<Token>& tokens, std::size_t index,
                           std::size_t unit_window) {
  return unit_after(tokens, index, unit_window) ? NumberRole::Size : NumberRole::Count;
}

VisitExtraction parse_text(std::string_view text, const ParserConfig& config) {
  VisitExtraction result;
  const std::vector<Token> tokens = lex(text);
  const std::size_t window = config.unit_window;
  SentenceAssembler sentence(result.mentions);

  std::size_t i = 0;
  while (i < tokens.size()) {
    const Token& tok = tokens[i];

    if (is_sentence_end(tok)) {
      sentence.end_sentence();
      ++i;
      continue;
    }

    if (auto site = match_site(tokens, i)) {
      sentence.site(site->first);
      i += site->second;
      continue;
    }

    if (!tok.is_number()) {
      ++i;
      continue;
    }

    // "a-b mm" / "a to b mm": the lower bound borrows the upper bound's unit.
    if (i + 2 < tokens.size() && is_range_marker(tokens[i + 1]) && tokens[i + 2].is_number()) {
      if (auto hi_unit = unit_after(tokens, i + 2, window)) {
        const Unit u = tokens[*hi_unit].unit;
        sentence.size(to_mm(tok.value, u), to_mm(tokens[i + 2].value, u));
        i = *hi_unit + 1;
        continue;
      }
    }

    if (auto unit = unit_after(tokens, i, window)) {
      const double lo = to_mm(tok.value, tokens[*unit].unit);
      // "a mm to b mm"
      const std::size_t after = *unit + 1;
      if (after + 1 < tokens.size() && is_range_marker(tokens[after]) &&
          tokens[after + 1].is_number()) {
        if (auto hi_unit = unit_after(tokens, after + 1, window)) {
          sentence.size(lo, to_mm(tokens[after + 1].value, tokens[*hi_unit].unit));
          i = *hi_unit + 1;
          continue;
        }
      }
      sentence.size(lo, lo);
      i = *unit + 1;
      continue;
    }

    const double v = tok.value;
    if (v >= 1.0 && v <= config.max_count && std::floor(v) == v) {
      sentence.count(static_cast<int>(v));
    } else {
      result.unparsed_numbers.push_back(tok);
    }
    ++i;
  }
  sentence.end_sentence();
  return result;
}

VisitExtraction parse_report(const ColonoscopyReport& report, const ParserConfig& config) {
  return parse_text(report.text, config);
}

VisitSummary aggregate_visit(const VisitExtraction& extraction) {
  VisitSummary summary;
  double weighted_size = 0.0;
  int sized = 0;
  for (const PolypMention& m : extraction.mentions) {
    summary.polyp_count += m.count;
    if (m.location) summary.location_counts[*m.location] += m.count;
    if (m.has_size()) {
      weighted_size += m.count * m.size_midpoint();
      sized += m.count;
      summary.max_size_mm = std::max(summary.max_size_mm.value_or(*m.size_max_mm), *m.size_max_mm);
    }
  }
  if (sized > 0) summary.mean_size_mm = weighted_size / sized;
  return summary;
}

}  // namespace polyp

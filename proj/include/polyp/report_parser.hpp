#pragma once

// Rule-based extraction of polyp counts, sizes and locations from
// colonoscopy report text.
//
// Extraction runs in three passes:
//   1. lex() splits the text into words, numbers (digits or number words),
//      units ("mm"/"cm") and punctuation.
//   2. Every number is classified as a size (a unit follows within a small
//      window) or a count. "a to b mm" and "a-b mm" ranges are recognised
//      before classification.
//   3. Within each sentence, counts and sizes accumulate until a colonic
//      site name closes them into a PolypMention anchored at that site.
//      Numbers left over at the end of a sentence attach to a bare site
//      mention of that sentence ("in the rectum, a 5 mm polyp") or else
//      form a mention without location.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "polyp/date.hpp"

namespace polyp {

enum class ColonSite {
  Transverse,
  Sigmoid,
  IleumCecum,
  Anus,
  Ascending,
  Descending,
  Hepatic,
  Rectum,
  Ileocecal,
  Splenic,
};

inline constexpr std::array<ColonSite, 10> kAllSites = {
    ColonSite::Transverse, ColonSite::Sigmoid,    ColonSite::IleumCecum, ColonSite::Anus,
    ColonSite::Ascending,  ColonSite::Descending, ColonSite::Hepatic,    ColonSite::Rectum,
    ColonSite::Ileocecal,  ColonSite::Splenic,
};

// Vocabulary spelling, e.g. "ileum cecum".
std::string_view site_name(ColonSite site);
// Column-safe identifier, e.g. "ileum_cecum".
std::string_view site_key(ColonSite site);
std::optional<ColonSite> site_from_key(std::string_view key);

struct ColonoscopyReport {
  std::string patient_id;
  Date visit_date;
  std::string text;
};

enum class TokenKind { Word, Number, Unit, Punct };
enum class Unit { Mm, Cm };

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

struct Token {
  TokenKind kind = TokenKind::Word;
  std::string lexeme;  // lower-cased source text
  Span span;
  double value = 0.0;  // Number only
  Unit unit = Unit::Mm;  // Unit only

  bool is_number() const { return kind == TokenKind::Number; }
  bool is_unit() const { return kind == TokenKind::Unit; }
  bool is_word(std::string_view w) const { return kind == TokenKind::Word && lexeme == w; }
  bool is_punct(std::string_view p) const { return kind == TokenKind::Punct && lexeme == p; }
};

enum class NumberRole { Size, Count };

struct ParserConfig {
  // Tokens after a number searched for a unit.
  std::size_t unit_window = 2;
  // Counts above this are treated as stray numbers (dates, ids).
  int max_count = 50;
};

struct PolypMention {
  std::optional<ColonSite> location;
  std::optional<double> size_min_mm;
  std::optional<double> size_max_mm;
  int count = 1;

  bool has_size() const { return size_min_mm.has_value() && size_max_mm.has_value(); }
  double size_midpoint() const { return (*size_min_mm + *size_max_mm) / 2.0; }

  friend bool operator==(const PolypMention&, const PolypMention&) = default;
};

struct VisitExtraction {
  std::vector<PolypMention> mentions;
  std::vector<Token> unparsed_numbers;
};

struct VisitSummary {
  int polyp_count = 0;
  std::optional<double> mean_size_mm;
  std::optional<double> max_size_mm;
  std::map<ColonSite, int> location_counts;

  int located_count() const;
};

// Exact comparison except for the mean size, which is compared within `mean_tol`.
bool summaries_match(const VisitSummary& a, const VisitSummary& b, double mean_tol = 1e-9);

std::vector<Token> lex(std::string_view text);

// Precondition: tokens[index] is a Number.
NumberRole classify_number(const std::vector<Token>& tokens, std::size_t index,
                           std::size_t unit_window = ParserConfig{}.unit_window);

VisitExtraction parse_report(const ColonoscopyReport& report, const ParserConfig& config = {});
VisitExtraction parse_text(std::string_view text, const ParserConfig& config = {});

VisitSummary aggregate_visit(const VisitExtraction& extraction);

// Value of a number word ("seven", "forty"), if it is one.
std::optional<int> number_word_value(std::string_view word);

}  // namespace polyp

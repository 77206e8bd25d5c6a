#include "polyp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include "polyp/error.hpp"

namespace polyp {

namespace {

constexpr int kMaxGeneratedPolyps = 20;
constexpr int kMaxGeneratedSizeMm = 60;

struct WeightedSite {
  ColonSite site;
  double weight;
};

// Rough anatomic frequencies; the remaining mass leaves a polyp unlocated.
constexpr std::array<WeightedSite, 10> kSiteWeights = {{
    {ColonSite::Transverse, 0.11},
    {ColonSite::Sigmoid, 0.18},
    {ColonSite::IleumCecum, 0.05},
    {ColonSite::Anus, 0.02},
    {ColonSite::Ascending, 0.17},
    {ColonSite::Descending, 0.09},
    {ColonSite::Hepatic, 0.05},
    {ColonSite::Rectum, 0.14},
    {ColonSite::Ileocecal, 0.05},
    {ColonSite::Splenic, 0.04},
}};
constexpr double kUnlocatedWeight = 0.10;

double round1(double x) { return std::round(x * 10.0) / 10.0; }

bool bernoulli(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

template <std::size_t N>
std::size_t pick_weighted(Rng& rng, const std::array<double, N>& weights) {
  std::discrete_distribution<std::size_t> d(weights.begin(), weights.end());
  return d(rng);
}

VisitSummary random_visit(Rng& rng) {
  std::geometric_distribution<int> extra(0.45);
  std::lognormal_distribution<double> size(std::log(5.0), 0.6);
  std::array<double, 11> weights{};
  for (std::size_t k = 0; k < kSiteWeights.size(); ++k) weights[k] = kSiteWeights[k].weight;
  weights[10] = kUnlocatedWeight;

  VisitSummary s;
  s.polyp_count = std::min(1 + extra(rng), kMaxGeneratedPolyps);
  int total = 0;
  int largest = 0;
  for (int p = 0; p < s.polyp_count; ++p) {
    const int mm = std::clamp(static_cast<int>(std::lround(size(rng))), 1, kMaxGeneratedSizeMm);
    total += mm;
    largest = std::max(largest, mm);
    const std::size_t site = pick_weighted(rng, weights);
    if (site < kSiteWeights.size()) s.location_counts[kSiteWeights[site].site] += 1;
  }
  s.mean_size_mm = static_cast<double>(total) / s.polyp_count;
  s.max_size_mm = static_cast<double>(largest);
  return s;
}

Demographics random_demographics(Rng& rng) {
  Demographics d;
  const bool male = bernoulli(rng, 0.5);
  d.gender = male ? Gender::Male : Gender::Female;
  d.age_years = round1(std::clamp(std::normal_distribution<double>(60.0, 10.0)(rng), 40.0, 90.0));
  const double height =
      round1(std::clamp(std::normal_distribution<double>(male ? 176.0 : 163.0, 7.0)(rng), 140.0, 205.0));
  const double weight =
      round1(std::clamp(std::normal_distribution<double>(male ? 84.0 : 70.0, 14.0)(rng), 40.0, 180.0));
  d.height_cm = height;
  d.weight_kg = weight;
  d.bmi = round1(weight / ((height / 100.0) * (height / 100.0)));
  const bool used = bernoulli(rng, 0.5);
  d.smoking_status = used ? SmokingStatus::Used : SmokingStatus::Never;
  d.smoking_frequency = !used ? SmokingFrequency::None
                              : (bernoulli(rng, 0.5) ? SmokingFrequency::Light : SmokingFrequency::Heavy);
  d.race = static_cast<Race>(pick_weighted(rng, std::array<double, 4>{0.85, 0.05, 0.05, 0.05}));
  d.ethnicity = bernoulli(rng, 0.05) ? Ethnicity::Hispanic : Ethnicity::NonHispanic;
  d.marital_status =
      static_cast<MaritalStatus>(pick_weighted(rng, std::array<double, 4>{0.6, 0.15, 0.15, 0.1}));
  return d;
}

void drop_one_field(Demographics& d, Rng& rng) {
  switch (std::uniform_int_distribution<int>(0, 9)(rng)) {
    case 0: d.gender.reset(); break;
    case 1: d.age_years.reset(); break;
    case 2: d.bmi.reset(); break;
    case 3: d.height_cm.reset(); break;
    case 4: d.weight_kg.reset(); break;
    case 5: d.smoking_status.reset(); break;
    case 6: d.smoking_frequency.reset(); break;
    case 7: d.race.reset(); break;
    case 8: d.ethnicity.reset(); break;
    default: d.marital_status.reset(); break;
  }
}

struct PlantedTerm {
  std::string variable;
  std::optional<std::string> level;
  double beta;
};

std::vector<PlantedTerm> planted_terms(const SynthConfig& config) {
  const auto schema = base_schema();
  std::vector<PlantedTerm> terms;
  for (const auto& [key, beta] : config.planted_log_hazard_ratios) {
    const auto colon = key.find(':');
    PlantedTerm term{key.substr(0, colon), std::nullopt, beta};
    if (colon != std::string::npos) term.level = key.substr(colon + 1);
    auto var = std::find_if(schema.begin(), schema.end(),
                            [&](const Variable& v) { return v.name == term.variable; });
    const bool ok = var != schema.end() &&
                    (var->is_factor() ? term.level && var->level_index(*term.level) : !term.level);
    if (!ok || !std::isfinite(beta)) {
      throw Error(ErrorCode::InvalidConfig, "cannot plant an effect on '" + key + "'");
    }
    terms.push_back(std::move(term));
  }
  return terms;
}

double linear_predictor(const std::vector<PlantedTerm>& terms, const CovariateRow& row) {
  double eta = 0.0;
  for (const auto& term : terms) {
    const CovariateValue& v = row.at(term.variable);
    const double x = term.level ? (std::get<std::string>(v) == *term.level ? 1.0 : 0.0) : std::get<double>(v);
    eta += term.beta * x;
  }
  return eta;
}

ReportStyle pick_style(Rng& rng, const StyleWeights& w) {
  switch (pick_weighted(rng, std::array<double, 3>{w.plain, w.ranged, w.number_words})) {
    case 0: return ReportStyle::Plain;
    case 1: return ReportStyle::Ranged;
    default: return ReportStyle::NumberWords;
  }
}

// ---- report rendering -------------------------------------------------------

std::string site_phrase(ColonSite site) {
  switch (site) {
    case ColonSite::Transverse: return "transverse colon";
    case ColonSite::Sigmoid: return "sigmoid colon";
    case ColonSite::IleumCecum: return "ileum cecum";
    case ColonSite::Anus: return "anus";
    case ColonSite::Ascending: return "ascending colon";
    case ColonSite::Descending: return "descending colon";
    case ColonSite::Hepatic: return "hepatic flexure";
    case ColonSite::Rectum: return "rectum";
    case ColonSite::Ileocecal: return "ileocecal valve";
    case ColonSite::Splenic: return "splenic flexure";
  }
  return "";
}

struct PolypGroup {
  std::optional<ColonSite> site;
  std::optional<int> size_mm;
  int count = 0;
};

std::string count_phrase(int count, ReportStyle style) {
  if (count == 1 && style != ReportStyle::NumberWords) return "a";
  if (style == ReportStyle::Ranged) return std::to_string(count);
  return number_to_words(count);
}

std::string size_phrase(int mm, int max_mm, ReportStyle style, Rng& rng, double cm_probability) {
  switch (style) {
    case ReportStyle::NumberWords:
      return number_to_words(mm) + " mm";
    case ReportStyle::Ranged: {
      // Symmetric range around the size; the upper end must not exceed the visit maximum.
      const int spread = std::min(mm - 1, max_mm - mm);
      if (spread >= 1) {
        const int k = std::uniform_int_distribution<int>(1, spread)(rng);
        const char* marker = bernoulli(rng, 0.5) ? " to " : "-";
        return std::to_string(mm - k) + marker + std::to_string(mm + k) + " mm";
      }
      return std::to_string(mm) + " mm";
    }
    case ReportStyle::Plain:
      break;
  }
  if (mm > 0 && mm % 10 == 0 && bernoulli(rng, cm_probability)) {
    return std::to_string(mm / 10) + " cm";
  }
  return std::to_string(mm) + " mm";
}

std::string render_group(const PolypGroup& g, int max_mm, ReportStyle style, Rng& rng,
                         double cm_probability) {
  const std::string noun = g.count == 1 ? "polyp" : "polyps";
  const std::string where = g.site             ? "in the " + site_phrase(*g.site)
                            : g.count == 1 ? "was also removed"
                                           : "were also removed";
  std::string text = count_phrase(g.count, style);
  if (!g.size_mm) return text + " " + noun + " " + where + ".";
  const std::string size = size_phrase(*g.size_mm, max_mm, style, rng, cm_probability);
  // Spelled-out numbers stay separated so "twenty" + "five mm" cannot fuse.
  if (style == ReportStyle::Plain) return text + " " + size + " " + noun + " " + where + ".";
  return text + " " + noun + " measuring " + size + " " + where + ".";
}

std::string capitalise(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

std::string to_string(ReportStyle style) {
  switch (style) {
    case ReportStyle::Plain: return "Plain";
    case ReportStyle::Ranged: return "Ranged";
    case ReportStyle::NumberWords: return "NumberWords";
  }
  return "";
}

std::string number_to_words(int n) {
  static constexpr std::array<const char*, 20> small = {
      "zero",    "one",     "two",       "three",    "four",     "five",    "six",
      "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
      "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"};
  static constexpr std::array<const char*, 8> tens = {"twenty", "thirty",  "forty",  "fifty",
                                                      "sixty",  "seventy", "eighty", "ninety"};
  if (n < 0 || n > 99) throw Error(ErrorCode::InvalidArgument, "number words cover 0..99 only");
  if (n < 20) return small[static_cast<std::size_t>(n)];
  std::string out = tens[static_cast<std::size_t>(n / 10 - 2)];
  if (n % 10 != 0) out += std::string("-") + small[static_cast<std::size_t>(n % 10)];
  return out;
}

std::string generate_report_text(const VisitSummary& summary, ReportStyle style, Rng& rng,
                                 const RenderOptions& options) {
  auto unrenderable = [](const std::string& why) {
    return Error(ErrorCode::UnrenderableSummary, "cannot render visit summary: " + why);
  };
  const int n = summary.polyp_count;
  if (n < 0) throw unrenderable("negative polyp count");
  if (n == 0) {
    if (summary.mean_size_mm || summary.max_size_mm || !summary.location_counts.empty()) {
      throw unrenderable("sizes or locations without polyps");
    }
    return "normal colonoscopy, no polyps.";
  }
  if (summary.located_count() > n) throw unrenderable("more located polyps than polyps");
  if (summary.mean_size_mm.has_value() != summary.max_size_mm.has_value()) {
    throw unrenderable("mean and max size must both be present or absent");
  }

  // Per-polyp sizes: the largest polyp carries the max, the rest share the
  // remaining total as evenly as whole millimetres allow.
  std::vector<std::optional<int>> sizes(static_cast<std::size_t>(n));
  int max_mm = 0;
  if (summary.max_size_mm) {
    const double max = *summary.max_size_mm;
    const double total = *summary.mean_size_mm * n;
    const double rounded_total = std::round(total);
    if (max != std::round(max) || max < 0 || max > 99) throw unrenderable("max size is not whole mm");
    if (std::abs(total - rounded_total) > 1e-6 * std::max(1.0, total)) {
      throw unrenderable("mean size does not give a whole-mm total");
    }
    max_mm = static_cast<int>(max);
    const int rest_total = static_cast<int>(rounded_total) - max_mm;
    sizes[0] = max_mm;
    if (n == 1) {
      if (rest_total != 0) throw unrenderable("single polyp with mean != max");
    } else {
      if (rest_total < 0) throw unrenderable("mean below what the max allows");
      const int q = rest_total / (n - 1);
      const int rem = rest_total % (n - 1);
      if (q + (rem > 0 ? 1 : 0) > max_mm) throw unrenderable("mean exceeds max");
      for (int k = 1; k < n; ++k) sizes[static_cast<std::size_t>(k)] = q + (k <= rem ? 1 : 0);
    }
    std::shuffle(sizes.begin(), sizes.end(), rng);
  }

  std::vector<std::optional<ColonSite>> sites;
  for (const auto& [site, count] : summary.location_counts) {
    if (count < 0) throw unrenderable("negative location count");
    sites.insert(sites.end(), static_cast<std::size_t>(count), site);
  }
  sites.resize(static_cast<std::size_t>(n), std::nullopt);

  std::vector<PolypGroup> groups;
  for (std::size_t p = 0; p < sites.size(); ++p) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const PolypGroup& g) {
      return g.site == sites[p] && g.size_mm == sizes[p];
    });
    if (it == groups.end()) {
      groups.push_back({sites[p], sizes[p], 1});
    } else {
      ++it->count;
    }
  }
  std::shuffle(groups.begin(), groups.end(), rng);

  std::string text;
  if (style != ReportStyle::Plain && bernoulli(rng, 0.5)) text = "Findings: ";
  for (const auto& g : groups) {
    if (!text.empty() && text.back() != ' ') text += ' ';
    std::string sentence = render_group(g, max_mm, style, rng, options.cm_probability);
    text += style == ReportStyle::Plain ? sentence : capitalise(sentence);
  }
  return text;
}

void validate(const SynthConfig& config) {
  auto fail = [](const std::string& why) { return Error(ErrorCode::InvalidConfig, why); };
  if (config.n_patients < 1) throw fail("n_patients must be positive");
  if (!(config.baseline_hazard_per_day > 0.0)) throw fail("baseline hazard must be positive");
  if (config.censor_horizon_days < 1) throw fail("censor horizon must be positive");
  if (!(config.missingness_rate >= 0.0 && config.missingness_rate < 1.0)) {
    throw fail("missingness rate must lie in [0, 1)");
  }
  const auto& w = config.styles;
  if (w.plain < 0 || w.ranged < 0 || w.number_words < 0 ||
      std::abs(w.plain + w.ranged + w.number_words - 1.0) > 1e-9) {
    throw fail("report style weights must be non-negative and sum to 1");
  }
  if (!(config.cm_probability >= 0.0 && config.cm_probability <= 1.0)) {
    throw fail("cm probability must lie in [0, 1]");
  }
  if (config.min_visit_gap_days < 1 || config.max_visit_gap_days < config.min_visit_gap_days) {
    throw fail("visit gap range is invalid");
  }
  planted_terms(config);
}

SynthCohort generate_cohort(const SynthConfig& config) {
  validate(config);
  const auto terms = planted_terms(config);
  const Date study_start = Date::parse("2011-01-01");

  SynthCohort cohort;
  for (int p = 0; p < config.n_patients; ++p) {
    Rng rng = stream_rng(config.seed, static_cast<std::uint64_t>(p));
    char id[16];
    std::snprintf(id, sizeof id, "P%05d", p + 1);

    PatientHistory h;
    h.patient_id = id;
    Demographics full = random_demographics(rng);
    const VisitSummary baseline = random_visit(rng);

    GroundTruth truth;
    truth.patient_id = h.patient_id;
    truth.baseline = baseline;
    truth.linear_predictor = linear_predictor(terms, baseline_covariates(baseline, full));
    const double rate = config.baseline_hazard_per_day * std::exp(truth.linear_predictor);
    truth.recurrence_time_days = std::exponential_distribution<double>(rate)(rng);

    h.demographics = full;
    if (bernoulli(rng, config.missingness_rate)) drop_one_field(h.demographics, rng);

    const Date first = study_start.plus_days(std::uniform_int_distribution<int>(0, 364)(rng));
    h.visits.push_back({first, baseline});
    std::uniform_int_distribution<int> gap(config.min_visit_gap_days, config.max_visit_gap_days);
    int day = 0;
    while (true) {
      day += gap(rng);
      if (day > config.censor_horizon_days) break;
      if (day >= truth.recurrence_time_days) {
        h.visits.push_back({first.plus_days(day), random_visit(rng)});
        break;
      }
      h.visits.push_back({first.plus_days(day), VisitSummary{}});
    }

    RenderOptions render{config.cm_probability};
    for (const auto& v : h.visits) {
      const ReportStyle style = pick_style(rng, config.styles);
      cohort.reports.push_back({h.patient_id, v.date, generate_report_text(v.summary, style, rng, render)});
    }
    cohort.histories.push_back(std::move(h));
    cohort.truth.push_back(std::move(truth));
  }
  return cohort;
}

}  // namespace polyp

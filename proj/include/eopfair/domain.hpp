#pragma once

// Core value types shared by every module: feature schema, decision subjects,
// pairwise questions and answers, weight vectors, participants. Plus dataset
// ingestion (delimited text, COMPAS-style binary encodings) and vector math.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eopfair/errors.hpp"

namespace eopfair {

using Vector = std::vector<double>;

/// Feasibility slack on the unit-ball constraint.
inline constexpr double kFeasibilityEps = 1e-9;

// ---------------------------------------------------------------------------
// Vector math
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// a.b / (|a| |b|), clamped into [-1, 1].
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine_similarity: undefined for a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

enum class FeatureKind { Binary, BoundedCount };

/// One modelled attribute of a decision subject.
///
/// `encoding` maps the raw dataset cell onto the model value:
///   "binary"            cell is already 0 or 1
///   "equals:<v>"        1 iff cell equals v (case-insensitive)
///   "not_equals:<v>"    1 iff cell differs from v
///   "less_than:<n>"     1 iff numeric cell < n
///   "count"             non-negative integer count (BoundedCount only)
struct Feature {
  std::string name;
  FeatureKind kind = FeatureKind::Binary;
  std::string encoding = "binary";
  /// Human-readable description of the 0/1 values, shown in question text.
  std::string display;
};

struct FeatureSchema {
  std::vector<Feature> features;
  std::string label_name = "two_year_recid";
  std::string prediction_name = "decile_score";

  std::size_t k() const noexcept { return features.size(); }

  /// Index of the single BoundedCount feature, if any.
  std::optional<std::size_t> count_index() const {
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (features[i].kind == FeatureKind::BoundedCount) return i;
    }
    return std::nullopt;
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& f : features) {
      if (f.name.empty()) throw SchemaError("feature name must be non-empty");
      if (!seen.insert(f.name).second) throw SchemaError("duplicate feature name: " + f.name);
    }
    if (label_name.empty()) throw SchemaError("label name must be non-empty");
  }
};

/// The five defendant attributes used for the recidivism questionnaires.
inline FeatureSchema compas_schema() {
  FeatureSchema s;
  s.features = {
      {"sex", FeatureKind::Binary, "equals:Male", "1 = male, 0 = female"},
      {"age", FeatureKind::Binary, "less_than:25", "1 = younger than 25, 0 = 25 or older"},
      {"race", FeatureKind::Binary, "not_equals:Caucasian", "1 = not Caucasian, 0 = Caucasian"},
      {"c_charge_degree", FeatureKind::Binary, "equals:F", "1 = felony, 0 = misdemeanor"},
      {"priors_count", FeatureKind::BoundedCount, "count", "number of prior offenses"},
  };
  s.label_name = "two_year_recid";
  s.prediction_name = "decile_score";
  return s;
}

// ---------------------------------------------------------------------------
// Subjects and questions
// ---------------------------------------------------------------------------

/// A decision subject: features x, true label y, optional prediction y_hat.
struct Subject {
  std::string id;
  Vector x;
  int y = 0;
  std::optional<int> y_hat;

  bool operator==(const Subject&) const = default;
};

enum class Part { Desert, Utility };

inline std::string_view to_string(Part p) { return p == Part::Desert ? "desert" : "utility"; }

inline Part parse_part(std::string_view s) {
  if (s == "desert") return Part::Desert;
  if (s == "utility") return Part::Utility;
  throw ValidationError("unknown part: " + std::string(s));
}

/// Weight dimension for a part: k+1 for desert over [x,y], k+2 for utility over [x,y,y_hat].
inline std::size_t part_dimension(Part p, std::size_t k) { return p == Part::Desert ? k + 1 : k + 2; }

struct PairwiseQuestion {
  std::string question_id;
  Part part = Part::Desert;
  Subject subject_1;
  Subject subject_2;
  bool is_attention_check = false;
  /// For attention checks: the dominant subject (1 or 2).
  std::optional<int> expected_choice;

  bool operator==(const PairwiseQuestion&) const = default;
};

/// Number of displayed attributes on which two subjects differ: the k features
/// and y, plus y_hat when `include_prediction`.
inline int attribute_difference(const Subject& a, const Subject& b, bool include_prediction) {
  if (a.x.size() != b.x.size()) throw ShapeError("attribute_difference: feature length mismatch");
  int diff = 0;
  for (std::size_t i = 0; i < a.x.size(); ++i) diff += (a.x[i] != b.x[i]);
  diff += (a.y != b.y);
  if (include_prediction) diff += (a.y_hat.value_or(0) != b.y_hat.value_or(0));
  return diff;
}

/// [x, y] for desert, [x, y, y_hat] for utility.
inline Vector augmented_features(const Subject& s, Part part) {
  Vector v = s.x;
  v.push_back(static_cast<double>(s.y));
  if (part == Part::Utility) {
    if (!s.y_hat) throw ShapeError("subject " + s.id + " has no prediction");
    v.push_back(static_cast<double>(*s.y_hat));
  }
  return v;
}

// ---------------------------------------------------------------------------
// Answers
// ---------------------------------------------------------------------------

/// Signed confidence-weighted answer: +-1 ("Possibly"), +-2 ("Clearly"); the
/// sign picks subject 1 (+) or subject 2 (-). The neutral variant is a
/// distinct NoPreference state that carries no likelihood information.
class Answer {
 public:
  Answer() = default;
  static Answer choice(int value) {
    if (value != 1 && value != -1 && value != 2 && value != -2) {
      throw ValidationError("answer must be one of -2, -1, +1, +2; got " + std::to_string(value));
    }
    return Answer(value);
  }
  static Answer no_preference() { return Answer(0); }

  bool is_no_preference() const noexcept { return value_ == 0; }
  /// Signed value; 0 only for NoPreference.
  int value() const noexcept { return value_; }
  int confidence() const noexcept { return value_ < 0 ? -value_ : value_; }
  /// 1 or 2; 0 for NoPreference.
  int chosen_subject() const noexcept { return value_ > 0 ? 1 : (value_ < 0 ? 2 : 0); }

  bool operator==(const Answer&) const = default;

 private:
  explicit Answer(int v) : value_(v) {}
  int value_ = 0;
};

struct Response {
  std::string question_id;
  Answer answer = Answer::no_preference();
  std::optional<std::string> justification;
  /// Milliseconds since the Unix epoch.
  std::int64_t answered_at = 0;

  bool operator==(const Response&) const = default;
};

enum class LikertLevel { Disagree, SomewhatDisagree, SomewhatAgree, Agree };

inline std::string_view to_string(LikertLevel l) {
  switch (l) {
    case LikertLevel::Disagree: return "disagree";
    case LikertLevel::SomewhatDisagree: return "somewhat_disagree";
    case LikertLevel::SomewhatAgree: return "somewhat_agree";
    case LikertLevel::Agree: return "agree";
  }
  return "disagree";
}

inline LikertLevel parse_likert_level(std::string_view s) {
  if (s == "disagree") return LikertLevel::Disagree;
  if (s == "somewhat_disagree") return LikertLevel::SomewhatDisagree;
  if (s == "somewhat_agree") return LikertLevel::SomewhatAgree;
  if (s == "agree") return LikertLevel::Agree;
  throw ValidationError("unknown Likert level: " + std::string(s));
}

/// Display labels, in scale order.
inline constexpr std::string_view kLikertLabels[] = {"Disagree", "Somewhat Disagree", "Somewhat Agree",
                                                     "Agree"};

struct LikertResponse {
  std::size_t feature_index = 0;
  LikertLevel level = LikertLevel::Disagree;
  std::optional<std::string> justification;

  bool operator==(const LikertResponse&) const = default;
};

// ---------------------------------------------------------------------------
// Weights, circumstances, participants
// ---------------------------------------------------------------------------

/// Desert or utility coefficients, constrained to the closed unit ball.
class WeightVector {
 public:
  WeightVector() = default;
  WeightVector(Vector coefficients, Part kind) : coefficients_(std::move(coefficients)), kind_(kind) {
    for (double c : coefficients_) {
      if (!std::isfinite(c)) throw DomainError("weight vector has a non-finite entry");
    }
    if (norm2(coefficients_) > 1.0 + kFeasibilityEps) {
      throw DomainError("weight vector norm " + std::to_string(norm2(coefficients_)) + " exceeds 1");
    }
  }

  const Vector& coefficients() const noexcept { return coefficients_; }
  Part kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return coefficients_.size(); }
  double operator[](std::size_t i) const { return coefficients_.at(i); }

  bool operator==(const WeightVector&) const = default;

 private:
  Vector coefficients_;
  Part kind_ = Part::Desert;
};

/// Per-feature flags: true = feature is part of the circumstance.
struct CircumstanceProfile {
  std::vector<bool> irrelevant_flags;

  bool operator==(const CircumstanceProfile&) const = default;
};

struct Participant {
  std::string participant_id;
  std::vector<LikertResponse> likert;
  std::vector<Response> desert_responses;
  std::vector<Response> utility_responses;
  std::optional<std::map<std::string, std::string>> demographics;

  bool operator==(const Participant&) const = default;
};

/// Demographic keys collected by the exit questionnaire.
inline const std::vector<std::string>& demographic_attributes() {
  static const std::vector<std::string> keys = {"gender", "race", "age_bracket", "education", "political_view"};
  return keys;
}

// ---------------------------------------------------------------------------
// Dataset ingestion
// ---------------------------------------------------------------------------

struct LoadOptions {
  /// y_hat = 1 iff raw score >= threshold.
  int score_threshold = 5;
  /// Count features are clamped at this cap and divided by it.
  double count_cap = 10.0;
  /// Keep count features unscaled.
  bool raw_counts = false;
  /// Require and read the raw score column.
  bool with_predictions = true;
  char delimiter = ',';
};

/// Model value of a count feature at the top of its range (used by attention checks).
inline double count_feature_max(const LoadOptions& opt) { return opt.raw_counts ? opt.count_cap : 1.0; }

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

/// Splits one delimited line; double-quoted fields may contain the delimiter.
inline std::vector<std::string> split_record(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  try {
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline double encode_cell(const Feature& f, const std::string& cell, std::size_t row, const LoadOptions& opt) {
  const std::string& enc = f.encoding;
  auto arg = [&](std::string_view prefix) { return enc.substr(prefix.size()); };
  if (f.kind == FeatureKind::BoundedCount || enc == "count") {
    const auto v = parse_number(cell);
    if (!v || *v < 0 || std::floor(*v) != *v) {
      throw RecordError(row, "column '" + f.name + "' is not a non-negative integer count: '" + cell + "'");
    }
    if (opt.raw_counts) return *v;
    return std::min(*v, opt.count_cap) / opt.count_cap;
  }
  if (enc == "binary") {
    const auto v = parse_number(cell);
    if (!v || (*v != 0.0 && *v != 1.0)) {
      throw RecordError(row, "column '" + f.name + "' is not binary: '" + cell + "'");
    }
    return *v;
  }
  if (enc.starts_with("equals:")) return lower(cell) == lower(arg("equals:")) ? 1.0 : 0.0;
  if (enc.starts_with("not_equals:")) return lower(cell) == lower(arg("not_equals:")) ? 0.0 : 1.0;
  if (enc.starts_with("less_than:")) {
    const auto v = parse_number(cell);
    const auto bound = parse_number(arg("less_than:"));
    if (!bound) throw SchemaError("bad encoding for '" + f.name + "': " + enc);
    if (!v) throw RecordError(row, "column '" + f.name + "' is not numeric: '" + cell + "'");
    return *v < *bound ? 1.0 : 0.0;
  }
  throw SchemaError("unknown encoding for '" + f.name + "': " + enc);
}

inline int parse_binary_label(const std::string& cell, const std::string& name, std::size_t row) {
  const auto v = parse_number(cell);
  if (!v || (*v != 0.0 && *v != 1.0)) throw RecordError(row, "column '" + name + "' is not 0/1: '" + cell + "'");
  return static_cast<int>(*v);
}

}  // namespace detail

/// Reads delimited text with a header row. Rows are numbered from 1 (the
/// first data row) in error messages. An optional "id" column names subjects;
/// otherwise the row number is used.
inline std::vector<Subject> load_dataset(std::istream& in, const FeatureSchema& schema,
                                         const LoadOptions& opt = {}) {
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("dataset is empty (no header row)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  const auto header = detail::split_record(line, opt.delimiter);

  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column: " + name);
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features) feature_cols.push_back(column(f.name));
  const std::size_t label_col = column(schema.label_name);
  std::optional<std::size_t> score_col;
  if (opt.with_predictions) score_col = column(schema.prediction_name);
  std::optional<std::size_t> id_col;
  if (auto it = std::find(header.begin(), header.end(), "id"); it != header.end()) {
    id_col = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<Subject> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_record(line, opt.delimiter);
    if (cells.size() < header.size()) {
      throw RecordError(row, "expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(cells.size()));
    }
    Subject s;
    s.id = id_col ? cells[*id_col] : std::to_string(row);
    s.x.reserve(schema.k());
    for (std::size_t j = 0; j < schema.k(); ++j) {
      s.x.push_back(detail::encode_cell(schema.features[j], cells[feature_cols[j]], row, opt));
    }
    s.y = detail::parse_binary_label(cells[label_col], schema.label_name, row);
    if (score_col) {
      const auto score = detail::parse_number(cells[*score_col]);
      if (!score) throw RecordError(row, "column '" + schema.prediction_name + "' is not numeric");
      s.y_hat = *score >= opt.score_threshold ? 1 : 0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<Subject> load_dataset_file(const std::string& path, const FeatureSchema& schema,
                                              const LoadOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open dataset: " + path);
  return load_dataset(in, schema, opt);
}

}  // namespace eopfair

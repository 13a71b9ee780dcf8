#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ckdseq/numerics.hpp"

namespace ckdseq {

enum class FeatureKind { Continuous, Occurrence };

struct DynamicFeatureSpec {
  std::string id;
  FeatureKind kind = FeatureKind::Continuous;
  // Fallback when an admission has no observation of a continuous feature.
  double cohort_default = 0.0;
};

struct StaticFeatureSpec {
  std::string id;
  bool categorical = false;
  std::vector<std::string> vocabulary;  // one-hot order, categorical only
};

struct CohortSchema {
  std::vector<DynamicFeatureSpec> dynamic;
  std::vector<StaticFeatureSpec> statics;
  std::vector<std::string> sex_vocabulary{"F", "M"};

  Index dynamic_count() const { return static_cast<Index>(dynamic.size()); }
  // Assembled per-step vector length: dynamic, one-hot statics, age, sex.
  Index feature_dim() const;
  std::vector<std::string> feature_names() const;
  int dynamic_index(std::string_view id) const;  // -1 when unknown

  std::string canonical_json() const;
  std::uint64_t hash() const { return fnv1a(canonical_json()); }
};

void save_schema(const std::string& path, const CohortSchema& schema);
CohortSchema load_schema(const std::string& path);

struct TimedEvent {
  std::string feature_id;
  double offset_hours = 0.0;  // from admission
  double value = 0.0;         // 1.0 for occurrence markers
};

using StaticValue = std::variant<double, std::string>;

struct AdmissionRecord {
  std::string subject_id;
  std::string admission_id;
  double age = 0.0;
  std::string sex;
  std::map<std::string, StaticValue> static_features;
  std::vector<TimedEvent> events;
  std::string icd_code;
  int mortality = 0;
  double mortality_offset_hours = 0.0;  // meaningful iff mortality == 1
};

void save_admissions(const std::string& path,
                     const std::vector<AdmissionRecord>& records);
std::vector<AdmissionRecord> load_admissions(const std::string& path);

// One fixed-length bucketed admission. stage_class is -1 when the ICD code
// falls outside the stage taxonomy; such admissions stay in the mortality
// task only.
struct BucketedSequence {
  Matrix features;      // T x D, fully imputed
  MaskMatrix raw_mask;  // T x dynamic_count, 1 where the bucket saw raw data
  Vector delta_t;       // T, whole hours since the last raw observation
  int stage_class = -1;
  int mortality = 0;
};

struct SequenceRecord {
  std::string admission_id;
  // False when death occurred before the mortality-task horizon; the record
  // is then excluded from mortality training and scoring to avoid leakage.
  bool mortality_eligible = true;
  BucketedSequence seq;
};

struct SequenceDataset {
  std::uint64_t schema_hash = 0;
  Index dynamic_count = 0;
  std::vector<std::string> feature_names;
  std::vector<SequenceRecord> records;

  Index feature_dim() const {
    return static_cast<Index>(feature_names.size());
  }
};

void save_dataset(const std::string& path, const SequenceDataset& ds);
SequenceDataset load_dataset(
    const std::string& path,
    std::optional<std::uint64_t> expected_schema_hash = std::nullopt);

struct CohortSplit {
  std::vector<Index> train, validation, test;
};

// Unified ICD-9 / ICD-10 CKD staging, dot-insensitive. nullopt marks codes
// outside the taxonomy (including 585.8, which has no class).
std::optional<int> map_icd_to_stage(std::string_view code);

struct RawBuckets {
  Matrix values;    // T x dynamic_count; NaN where a continuous bucket is empty
  MaskMatrix mask;  // T x dynamic_count
};

RawBuckets bucketize(const AdmissionRecord& rec, const CohortSchema& schema,
                     int window_hours = 72, int bucket_hours = 1);

struct ImputeOptions {
  bool use_median = false;  // patient-specific median instead of mean
};

struct ImputeNote {
  std::string admission_id;
  std::string feature_id;
  std::string action;
};

// Forward fill, then patient-specific mean (or median) for leading gaps.
// Continuous features with zero observations fall back to the schema default
// and are flagged in notes.
Matrix impute(const RawBuckets& buckets, const CohortSchema& schema,
              const ImputeOptions& opts = {},
              std::vector<ImputeNote>* notes = nullptr,
              const std::string& admission_id = {});

// delta_t[t] = (t+1) - last observed edge at or before t, where admission
// time is an implicit observation at edge 0 and a raw observation in bucket
// i counts at edge i+1.
Vector compute_delta_t(const MaskMatrix& mask);

BucketedSequence assemble(const AdmissionRecord& rec,
                          const Matrix& imputed_dynamic,
                          const MaskMatrix& mask, const CohortSchema& schema);

// k folds over n admissions; every index lands in exactly one test fold and
// validation is carved from each fold's training portion.
std::vector<CohortSplit> kfold_split(Index n, int k,
                                     double validation_fraction, Rng& rng);

// Sampling with replacement until every class matches the majority count.
// Never drops an index. Single-class input is returned unchanged with a
// warning.
std::vector<Index> oversample_minority(const std::vector<Index>& indices,
                                       const std::vector<int>& labels,
                                       Rng& rng, std::ostream* warn = nullptr);

}  // namespace ckdseq

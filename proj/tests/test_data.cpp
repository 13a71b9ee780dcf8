#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ckdseq/data.hpp"
#include "ckdseq/eval.hpp"
#include "ckdseq/synthetic.hpp"

using namespace ckdseq;
namespace fs = std::filesystem;

namespace {

CohortSchema two_feature_schema() {
  CohortSchema s;
  s.dynamic.push_back({"lab", FeatureKind::Continuous, 1.5});
  s.dynamic.push_back({"proc", FeatureKind::Occurrence, 0.0});
  s.statics.push_back({"bmi", false, {}});
  return s;
}

AdmissionRecord basic_record() {
  AdmissionRecord rec;
  rec.subject_id = "S1";
  rec.admission_id = "A1";
  rec.age = 60.0;
  rec.sex = "F";
  rec.static_features["bmi"] = 25.0;
  rec.icd_code = "N18.3";
  return rec;
}

}  // namespace

TEST_CASE("map_icd_to_stage covers all 15 listed codes exactly") {
  const std::pair<const char*, int> expected[] = {
      {"N18.1", 0}, {"N18.2", 1}, {"N18.3", 2}, {"N18.4", 3}, {"N18.5", 4},
      {"N18.6", 5}, {"N18.8", 6}, {"N18.9", 7}, {"585.1", 0}, {"585.2", 1},
      {"585.3", 2}, {"585.4", 3}, {"585.5", 4}, {"585.6", 5}, {"585.9", 7},
  };
  for (const auto& [code, stage] : expected) {
    REQUIRE(map_icd_to_stage(code).has_value());
    CHECK(*map_icd_to_stage(code) == stage);
  }
  CHECK(*map_icd_to_stage("n183") == 2);   // dot-insensitive, case-insensitive
  CHECK(*map_icd_to_stage("5856") == 5);
  CHECK_FALSE(map_icd_to_stage("585.8").has_value());  // no class in the table
  CHECK_FALSE(map_icd_to_stage("I10").has_value());
  CHECK_FALSE(map_icd_to_stage("").has_value());
}

TEST_CASE("stage mapping is one class per version minus the ICD-9 gap") {
  std::set<int> icd10, icd9;
  for (const char* c : {"N18.1", "N18.2", "N18.3", "N18.4", "N18.5", "N18.6",
                        "N18.8", "N18.9"})
    icd10.insert(*map_icd_to_stage(c));
  for (const char* c :
       {"585.1", "585.2", "585.3", "585.4", "585.5", "585.6", "585.9"})
    icd9.insert(*map_icd_to_stage(c));
  CHECK(icd10 == std::set<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(icd9 == std::set<int>{0, 1, 2, 3, 4, 5, 7});
}

TEST_CASE("bucketize: mean aggregation, occurrence indicator, discards") {
  const CohortSchema schema = two_feature_schema();
  AdmissionRecord rec = basic_record();
  rec.events.push_back({"lab", 0.5, 4.0});
  rec.events.push_back({"lab", 0.9, 6.0});
  rec.events.push_back({"proc", 3.2, 1.0});
  rec.events.push_back({"lab", 80.0, 9.0});  // past the window

  const RawBuckets b = bucketize(rec, schema, 72, 1);
  CHECK(b.values(0, 0) == 5.0);  // mean of 4 and 6
  CHECK(b.mask(0, 0) == 1);
  CHECK(b.values(3, 1) == 1.0);
  CHECK(b.mask(3, 1) == 1);
  for (Index t = 0; t < 72; ++t)
    if (t != 3) CHECK(b.values(t, 1) == 0.0);  // occurrence defined everywhere
  CHECK(b.mask.col(0).sum() == 1);             // the 80h event was dropped
  for (Index t = 1; t < 72; ++t) CHECK(std::isnan(b.values(t, 0)));
}

TEST_CASE("bucketize rejects unknown features") {
  AdmissionRecord rec = basic_record();
  rec.events.push_back({"mystery", 1.0, 2.0});
  CHECK_THROWS_AS(bucketize(rec, two_feature_schema()), SchemaError);
}

TEST_CASE("impute: forward fill then patient mean for the leading gap") {
  CohortSchema schema;
  schema.dynamic.push_back({"lab", FeatureKind::Continuous, 0.0});
  RawBuckets b;
  b.values = Matrix::Constant(4, 1, std::numeric_limits<double>::quiet_NaN());
  b.mask = MaskMatrix::Zero(4, 1);
  b.values(1, 0) = 3.0;
  b.mask(1, 0) = 1;
  b.values(3, 0) = 5.0;
  b.mask(3, 0) = 1;

  const Matrix out = impute(b, schema);
  CHECK(out(0, 0) == 4.0);  // mean of {3, 5}
  CHECK(out(1, 0) == 3.0);
  CHECK(out(2, 0) == 3.0);  // forward filled
  CHECK(out(3, 0) == 5.0);

  ImputeOptions median;
  median.use_median = true;
  const Matrix med = impute(b, schema, median);
  CHECK(med(0, 0) == 4.0);  // median of {3, 5} coincides with the mean
}

TEST_CASE("impute: fully observed column is unchanged") {
  CohortSchema schema;
  schema.dynamic.push_back({"lab", FeatureKind::Continuous, 0.0});
  RawBuckets b;
  b.values = Matrix(3, 1);
  b.values << 1.0, 2.0, 3.0;
  b.mask = MaskMatrix::Ones(3, 1);
  const Matrix out = impute(b, schema);
  CHECK((out - b.values).norm() == 0.0);
}

TEST_CASE("impute: occurrence columns never change") {
  const CohortSchema schema = two_feature_schema();
  AdmissionRecord rec = basic_record();
  rec.events.push_back({"lab", 0.2, 2.0});
  rec.events.push_back({"proc", 1.5, 1.0});
  const RawBuckets b = bucketize(rec, schema, 4, 1);
  const Matrix out = impute(b, schema);
  CHECK(out(0, 1) == 0.0);
  CHECK(out(1, 1) == 1.0);
  CHECK(out(2, 1) == 0.0);
  CHECK(out(3, 1) == 0.0);
}

TEST_CASE("impute: zero observations fall back to the schema default") {
  const CohortSchema schema = two_feature_schema();
  const AdmissionRecord rec = basic_record();  // no events at all
  const RawBuckets b = bucketize(rec, schema, 8, 1);
  std::vector<ImputeNote> notes;
  const Matrix out = impute(b, schema, {}, &notes, rec.admission_id);
  for (Index t = 0; t < 8; ++t) CHECK(out(t, 0) == 1.5);
  REQUIRE(notes.size() == 1);
  CHECK(notes[0].feature_id == "lab");
  CHECK(notes[0].admission_id == "A1");
}

TEST_CASE("compute_delta_t hand cases") {
  MaskMatrix dense = MaskMatrix::Ones(5, 2);
  const Vector all_ones = compute_delta_t(dense);
  for (Index t = 0; t < 5; ++t) CHECK(all_ones[t] == 1.0);

  MaskMatrix first_only = MaskMatrix::Zero(4, 1);
  first_only(0, 0) = 1;  // bucket 0 observed, buckets 1-3 empty
  const Vector dt = compute_delta_t(first_only);
  CHECK(dt[0] == 1.0);
  CHECK(dt[1] == 1.0);
  CHECK(dt[2] == 2.0);
  CHECK(dt[3] == 3.0);

  const Vector empty = compute_delta_t(MaskMatrix::Zero(72, 3));
  for (Index t = 0; t < 72; ++t) CHECK(empty[t] == static_cast<double>(t + 1));
}

TEST_CASE("compute_delta_t invariants on random masks") {
  Rng rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    const Index steps = 2 + static_cast<Index>(rng.uniform_int(30));
    MaskMatrix mask(steps, 2);
    for (Index t = 0; t < steps; ++t)
      for (Index f = 0; f < 2; ++f) mask(t, f) = rng.bernoulli(0.3) ? 1 : 0;
    const Vector dt = compute_delta_t(mask);
    CHECK(dt[0] == 1.0);
    for (Index t = 0; t < steps; ++t) {
      CHECK(dt[t] >= 1.0);
      CHECK(dt[t] <= static_cast<double>(t + 1));
      CHECK(dt[t] == std::floor(dt[t]));
      if (t > 0) {
        const bool prev_observed = mask.row(t - 1).maxCoeff() > 0;
        if (prev_observed)
          CHECK(dt[t] == 1.0);
        else
          CHECK(dt[t] == dt[t - 1] + 1.0);
      }
    }
  }
}

TEST_CASE("assemble: layout, constant tail, labels") {
  CohortSchema schema = two_feature_schema();
  schema.dynamic.push_back({"lab2", FeatureKind::Continuous, 0.0});
  schema.statics.push_back({"admission_type", true, {"elective", "emergency"}});

  AdmissionRecord rec = basic_record();
  rec.static_features["admission_type"] = std::string("emergency");
  rec.events.push_back({"lab", 0.5, 2.0});
  rec.events.push_back({"lab2", 1.5, 4.0});
  rec.events.push_back({"proc", 2.5, 1.0});
  rec.mortality = 1;
  rec.mortality_offset_hours = 100.0;

  const RawBuckets b = bucketize(rec, schema, 4, 1);
  const Matrix imputed = impute(b, schema);
  const BucketedSequence seq = assemble(rec, imputed, b.mask, schema);

  // 3 dynamic + 1 static cont + 2 one-hot + age + 2 sex one-hot
  CHECK(seq.features.cols() == schema.feature_dim());
  CHECK(schema.feature_dim() == 9);
  CHECK(seq.stage_class == 2);
  CHECK(seq.mortality == 1);
  CHECK(seq.delta_t.size() == 4);

  for (Index t = 0; t < 4; ++t) {
    CHECK(seq.features(t, 3) == 25.0);              // bmi
    CHECK(seq.features(t, 4) == 0.0);               // elective
    CHECK(seq.features(t, 5) == 1.0);               // emergency
    CHECK(seq.features(t, 6) == 0.6);               // age / 100
    CHECK(seq.features(t, 7) == 1.0);               // sex F
    CHECK(seq.features(t, 8) == 0.0);
  }
  CHECK(seq.features.allFinite());
}

TEST_CASE("assemble: same patient demographics produce identical tails") {
  const CohortSchema schema = two_feature_schema();
  AdmissionRecord first = basic_record();
  AdmissionRecord second = basic_record();
  second.admission_id = "A2";
  second.events.push_back({"lab", 0.1, 9.0});

  const RawBuckets b1 = bucketize(first, schema, 4, 1);
  const RawBuckets b2 = bucketize(second, schema, 4, 1);
  const BucketedSequence s1 = assemble(first, impute(b1, schema), b1.mask, schema);
  const BucketedSequence s2 = assemble(second, impute(b2, schema), b2.mask, schema);
  CHECK((s1.features.rightCols(4) - s2.features.rightCols(4)).norm() == 0.0);
}

TEST_CASE("assemble rejects categorical values outside the vocabulary") {
  CohortSchema schema = two_feature_schema();
  AdmissionRecord rec = basic_record();
  rec.sex = "X";
  const RawBuckets b = bucketize(rec, schema, 4, 1);
  CHECK_THROWS_AS(assemble(rec, impute(b, schema), b.mask, schema),
                  SchemaError);
}

TEST_CASE("kfold_split: coverage, remainders, determinism") {
  Rng rng1(5), rng2(5);
  const auto splits = kfold_split(10, 5, 0.25, rng1);
  REQUIRE(splits.size() == 5);
  std::set<Index> seen;
  for (const CohortSplit& s : splits) {
    CHECK(s.test.size() == 2);
    for (Index i : s.test) {
      CHECK(seen.count(i) == 0);
      seen.insert(i);
    }
    std::set<Index> parts(s.train.begin(), s.train.end());
    parts.insert(s.validation.begin(), s.validation.end());
    parts.insert(s.test.begin(), s.test.end());
    CHECK(parts.size() == 10);  // disjoint union covers everything
    CHECK(s.validation.size() == 2);  // 25% of the 8-element pool
  }
  CHECK(seen.size() == 10);

  const auto again = kfold_split(10, 5, 0.25, rng2);
  for (int f = 0; f < 5; ++f) {
    CHECK(splits[f].train == again[f].train);
    CHECK(splits[f].validation == again[f].validation);
    CHECK(splits[f].test == again[f].test);
  }

  Rng rng3(5);
  const auto uneven = kfold_split(11, 5, 0.2, rng3);
  std::multiset<std::size_t> sizes;
  for (const CohortSplit& s : uneven) sizes.insert(s.test.size());
  CHECK(sizes == std::multiset<std::size_t>{3, 2, 2, 2, 2});

  Rng rng4(5);
  CHECK_THROWS_AS(kfold_split(4, 5, 0.2, rng4), ArgumentError);
}

TEST_CASE("oversample_minority balances counts and keeps originals") {
  Rng rng(17);
  std::vector<Index> indices;
  std::vector<int> labels;
  for (Index i = 0; i < 10; ++i) {
    indices.push_back(i);
    labels.push_back(0);
  }
  for (Index i = 10; i < 13; ++i) {
    indices.push_back(i);
    labels.push_back(1);
  }
  const auto out = oversample_minority(indices, labels, rng);
  CHECK(out.size() == 20);
  std::size_t zeros = 0, ones = 0;
  for (Index i : out) (i < 10 ? zeros : ones)++;
  CHECK(zeros == 10);
  CHECK(ones == 10);
  for (Index i : indices)
    CHECK(std::count(out.begin(), out.end(), i) >= 1);

  // Balanced input comes back as the same multiset.
  std::vector<Index> balanced{0, 1, 2, 3};
  std::vector<int> blabels{0, 0, 1, 1};
  CHECK(oversample_minority(balanced, blabels, rng) == balanced);

  // Single class: warned no-op.
  std::ostringstream warn;
  std::vector<int> single{0, 0, 0, 0};
  CHECK(oversample_minority(balanced, single, rng, &warn) == balanced);
  CHECK(warn.str().find("single class") != std::string::npos);

  Rng r1(3), r2(3);
  CHECK(oversample_minority(indices, labels, r1) ==
        oversample_minority(indices, labels, r2));
}

TEST_CASE("synthetic cohort: determinism and label knobs") {
  SynthSpec spec;
  spec.cohort_size = 200;
  Rng r1(7), r2(7);
  const auto a = generate_synthetic_cohort(spec, r1);
  const auto b = generate_synthetic_cohort(spec, r2);

  const fs::path pa = fs::temp_directory_path() / "ckdseq_cohort_a.jsonl";
  const fs::path pb = fs::temp_directory_path() / "ckdseq_cohort_b.jsonl";
  save_admissions(pa.string(), a);
  save_admissions(pb.string(), b);
  std::ifstream fa(pa), fb(pb);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());
  fs::remove(pa);
  fs::remove(pb);

  SynthSpec no_deaths = spec;
  no_deaths.mortality_base_rate = 0.0;
  Rng r3(7);
  for (const AdmissionRecord& rec : generate_synthetic_cohort(no_deaths, r3))
    CHECK(rec.mortality == 0);

  SynthSpec bad = spec;
  bad.stage_weights = {0, 0, 0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  SynthSpec negative = spec;
  negative.noise_sd = -1.0;
  CHECK_THROWS_AS(negative.validate(), ConfigError);
}

TEST_CASE("default demo cohort has 500 admissions and all 8 stages") {
  SynthSpec spec;  // defaults
  Rng rng(7);
  const auto cohort = generate_synthetic_cohort(spec, rng);
  CHECK(cohort.size() == 500);
  std::set<int> stages;
  for (const AdmissionRecord& rec : cohort) {
    const auto stage = map_icd_to_stage(rec.icd_code);
    if (stage.has_value()) stages.insert(*stage);
  }
  CHECK(stages.size() == 8);
}

TEST_CASE("zero-noise disjoint levels: LR on raw 72h means is perfect") {
  SynthSpec spec;
  spec.cohort_size = 160;
  spec.noise_sd = 0.0;
  spec.level_base = 0.2;
  spec.level_step = 0.3;
  spec.occurrence_features = 0;
  Rng rng(11);
  const auto cohort = generate_synthetic_cohort(spec, rng);
  const CohortSchema schema = synth_schema(spec);

  Matrix x(static_cast<Index>(cohort.size()), schema.dynamic_count());
  std::vector<int> y;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const RawBuckets b = bucketize(cohort[i], schema);
    const Matrix imputed = impute(b, schema);
    x.row(static_cast<Index>(i)) = imputed.colwise().mean();
    y.push_back(*map_icd_to_stage(cohort[i].icd_code));
  }
  const LogRegModel lr = fit_logreg(x, y, 8, 1e-6);
  CHECK(accuracy(logreg_predict(lr, x), y) == 1.0);
}

TEST_CASE("imputation leaves no missing values on random admissions") {
  Rng rng(23);
  SynthSpec spec;
  spec.cohort_size = 300;
  spec.gap_base_hours = 3.0;
  spec.gap_jitter = 2.0;
  const CohortSchema schema = synth_schema(spec);
  const auto cohort = generate_synthetic_cohort(spec, rng);
  for (const AdmissionRecord& rec : cohort) {
    const RawBuckets b = bucketize(rec, schema);
    const Matrix imputed = impute(b, schema);
    CHECK(imputed.allFinite());
  }
}

TEST_CASE("dataset container round-trips and rejects hash mismatch") {
  SynthSpec spec;
  spec.cohort_size = 12;
  Rng rng(3);
  const auto cohort = generate_synthetic_cohort(spec, rng);
  const CohortSchema schema = synth_schema(spec);

  SequenceDataset ds;
  ds.schema_hash = schema.hash();
  ds.dynamic_count = schema.dynamic_count();
  ds.feature_names = schema.feature_names();
  for (const AdmissionRecord& rec : cohort) {
    const RawBuckets b = bucketize(rec, schema);
    SequenceRecord sr;
    sr.admission_id = rec.admission_id;
    sr.seq = assemble(rec, impute(b, schema), b.mask, schema);
    ds.records.push_back(std::move(sr));
  }

  const fs::path path = fs::temp_directory_path() / "ckdseq_ds.bin";
  save_dataset(path.string(), ds);
  const SequenceDataset loaded = load_dataset(path.string(), schema.hash());
  REQUIRE(loaded.records.size() == ds.records.size());
  CHECK(loaded.feature_names == ds.feature_names);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const SequenceRecord& a = ds.records[i];
    const SequenceRecord& b = loaded.records[i];
    CHECK(a.admission_id == b.admission_id);
    CHECK(a.seq.stage_class == b.seq.stage_class);
    CHECK((a.seq.features - b.seq.features).norm() == 0.0);
    CHECK((a.seq.delta_t - b.seq.delta_t).norm() == 0.0);
    CHECK((a.seq.raw_mask.cast<int>() - b.seq.raw_mask.cast<int>()).norm() == 0);
  }
  CHECK_THROWS_AS(load_dataset(path.string(), schema.hash() + 1), SchemaError);
  fs::remove(path);
}

TEST_CASE("admissions file round-trips") {
  SynthSpec spec;
  spec.cohort_size = 20;
  spec.unmapped_icd_rate = 0.2;
  Rng rng(9);
  const auto cohort = generate_synthetic_cohort(spec, rng);
  const fs::path path = fs::temp_directory_path() / "ckdseq_adm.jsonl";
  save_admissions(path.string(), cohort);
  const auto loaded = load_admissions(path.string());
  REQUIRE(loaded.size() == cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    CHECK(loaded[i].admission_id == cohort[i].admission_id);
    CHECK(loaded[i].icd_code == cohort[i].icd_code);
    CHECK(loaded[i].mortality == cohort[i].mortality);
    CHECK(loaded[i].events.size() == cohort[i].events.size());
    CHECK(loaded[i].age == cohort[i].age);
  }
  fs::remove(path);
}

TEST_CASE("schema round-trips and hashes stably") {
  CohortSchema schema = two_feature_schema();
  schema.statics.push_back({"admission_type", true, {"elective", "emergency"}});
  const fs::path path = fs::temp_directory_path() / "ckdseq_schema.json";
  save_schema(path.string(), schema);
  const CohortSchema loaded = load_schema(path.string());
  CHECK(loaded.canonical_json() == schema.canonical_json());
  CHECK(loaded.hash() == schema.hash());
  fs::remove(path);
}

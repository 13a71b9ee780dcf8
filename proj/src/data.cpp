#include "ckdseq/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace ckdseq {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json schema_to_json(const CohortSchema& s) {
  json dynamic = json::array();
  for (const DynamicFeatureSpec& f : s.dynamic) {
    json j{{"id", f.id},
           {"kind", f.kind == FeatureKind::Continuous ? "continuous"
                                                      : "occurrence"}};
    if (f.kind == FeatureKind::Continuous) j["default"] = f.cohort_default;
    dynamic.push_back(j);
  }
  json statics = json::array();
  for (const StaticFeatureSpec& f : s.statics) {
    json j{{"id", f.id},
           {"kind", f.categorical ? "categorical" : "continuous"}};
    if (f.categorical) j["vocabulary"] = f.vocabulary;
    statics.push_back(j);
  }
  return json{{"version", 1},
              {"dynamic", dynamic},
              {"static", statics},
              {"sex_vocabulary", s.sex_vocabulary}};
}

CohortSchema schema_from_json(const json& j) {
  if (!j.contains("dynamic") || !j.contains("static"))
    throw SchemaError("schema: missing dynamic/static sections");
  CohortSchema s;
  for (const json& f : j.at("dynamic")) {
    DynamicFeatureSpec spec;
    spec.id = f.at("id").get<std::string>();
    const std::string kind = f.at("kind").get<std::string>();
    if (kind == "continuous")
      spec.kind = FeatureKind::Continuous;
    else if (kind == "occurrence")
      spec.kind = FeatureKind::Occurrence;
    else
      throw SchemaError("schema: unknown feature kind '" + kind + "'");
    spec.cohort_default = f.value("default", 0.0);
    s.dynamic.push_back(std::move(spec));
  }
  for (const json& f : j.at("static")) {
    StaticFeatureSpec spec;
    spec.id = f.at("id").get<std::string>();
    const std::string kind = f.at("kind").get<std::string>();
    spec.categorical = kind == "categorical";
    if (!spec.categorical && kind != "continuous")
      throw SchemaError("schema: unknown static kind '" + kind + "'");
    if (spec.categorical) {
      spec.vocabulary = f.at("vocabulary").get<std::vector<std::string>>();
      if (spec.vocabulary.empty())
        throw SchemaError("schema: empty vocabulary for " + spec.id);
    }
    s.statics.push_back(std::move(spec));
  }
  if (j.contains("sex_vocabulary"))
    s.sex_vocabulary = j.at("sex_vocabulary").get<std::vector<std::string>>();
  return s;
}

int vocab_index(const std::vector<std::string>& vocab,
                const std::string& value, const std::string& what) {
  const auto it = std::find(vocab.begin(), vocab.end(), value);
  if (it == vocab.end())
    throw SchemaError(what + ": value '" + value + "' not in vocabulary");
  return static_cast<int>(it - vocab.begin());
}

}  // namespace

Index CohortSchema::feature_dim() const {
  Index d = dynamic_count();
  for (const StaticFeatureSpec& f : statics)
    d += f.categorical ? static_cast<Index>(f.vocabulary.size()) : 1;
  d += 1;  // age
  d += static_cast<Index>(sex_vocabulary.size());
  return d;
}

std::vector<std::string> CohortSchema::feature_names() const {
  std::vector<std::string> names;
  for (const DynamicFeatureSpec& f : dynamic) names.push_back(f.id);
  for (const StaticFeatureSpec& f : statics) {
    if (f.categorical)
      for (const std::string& v : f.vocabulary) names.push_back(f.id + "=" + v);
    else
      names.push_back(f.id);
  }
  names.push_back("age");
  for (const std::string& v : sex_vocabulary) names.push_back("sex=" + v);
  return names;
}

int CohortSchema::dynamic_index(std::string_view id) const {
  for (std::size_t i = 0; i < dynamic.size(); ++i)
    if (dynamic[i].id == id) return static_cast<int>(i);
  return -1;
}

std::string CohortSchema::canonical_json() const {
  return schema_to_json(*this).dump();
}

void save_schema(const std::string& path, const CohortSchema& schema) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw SchemaError("schema: cannot open " + path);
  out << schema_to_json(schema).dump(2) << "\n";
}

CohortSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("schema: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("schema: parse error in " + path + ": " + e.what());
  }
  return schema_from_json(j);
}

void save_admissions(const std::string& path,
                     const std::vector<AdmissionRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw SchemaError("admissions: cannot open " + path);
  for (const AdmissionRecord& r : records) {
    json statics = json::object();
    for (const auto& [key, value] : r.static_features) {
      if (std::holds_alternative<double>(value))
        statics[key] = std::get<double>(value);
      else
        statics[key] = std::get<std::string>(value);
    }
    json events = json::array();
    for (const TimedEvent& e : r.events)
      events.push_back(json{{"feature", e.feature_id},
                            {"offset_hours", e.offset_hours},
                            {"value", e.value}});
    json j{{"subject_id", r.subject_id}, {"admission_id", r.admission_id},
           {"age", r.age},               {"sex", r.sex},
           {"static", statics},          {"icd_code", r.icd_code},
           {"mortality", r.mortality},   {"events", events}};
    if (r.mortality == 1) j["mortality_offset_hours"] = r.mortality_offset_hours;
    out << j.dump() << "\n";
  }
}

std::vector<AdmissionRecord> load_admissions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("admissions: cannot open " + path);
  std::vector<AdmissionRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError("admissions: parse error at line " +
                        std::to_string(lineno) + ": " + e.what());
    }
    AdmissionRecord r;
    try {
      r.subject_id = j.at("subject_id").get<std::string>();
      r.admission_id = j.at("admission_id").get<std::string>();
      r.age = j.at("age").get<double>();
      r.sex = j.at("sex").get<std::string>();
      r.icd_code = j.at("icd_code").get<std::string>();
      r.mortality = j.at("mortality").get<int>();
      if (r.mortality == 1)
        r.mortality_offset_hours = j.at("mortality_offset_hours").get<double>();
      const json statics = j.value("static", json::object());
      for (const auto& [key, value] : statics.items())
        r.static_features[key] = value.is_string()
                                     ? StaticValue(value.get<std::string>())
                                     : StaticValue(value.get<double>());
      const json events = j.value("events", json::array());
      for (const json& e : events) {
        TimedEvent ev;
        ev.feature_id = e.at("feature").get<std::string>();
        ev.offset_hours = e.at("offset_hours").get<double>();
        ev.value = e.at("value").get<double>();
        if (!std::isfinite(ev.offset_hours) || ev.offset_hours < 0.0)
          throw SchemaError("admissions: bad event offset at line " +
                            std::to_string(lineno));
        r.events.push_back(std::move(ev));
      }
    } catch (const json::exception& e) {
      throw SchemaError("admissions: bad record at line " +
                        std::to_string(lineno) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::optional<int> map_icd_to_stage(std::string_view code) {
  std::string norm;
  norm.reserve(code.size());
  for (char c : code)
    if (c != '.') norm.push_back(static_cast<char>(std::toupper(c)));
  if (norm == "N181" || norm == "5851") return 0;
  if (norm == "N182" || norm == "5852") return 1;
  if (norm == "N183" || norm == "5853") return 2;
  if (norm == "N184" || norm == "5854") return 3;
  if (norm == "N185" || norm == "5855") return 4;
  if (norm == "N186" || norm == "5856") return 5;
  if (norm == "N188") return 6;  // no ICD-9 counterpart
  if (norm == "N189" || norm == "5859") return 7;
  return std::nullopt;
}

RawBuckets bucketize(const AdmissionRecord& rec, const CohortSchema& schema,
                     int window_hours, int bucket_hours) {
  if (window_hours < 1 || bucket_hours < 1 || window_hours % bucket_hours != 0)
    throw ArgumentError("bucketize: window must be a multiple of bucket size");
  const Index steps = window_hours / bucket_hours;
  const Index dyn = schema.dynamic_count();

  RawBuckets out;
  out.mask = MaskMatrix::Zero(steps, dyn);
  Matrix sums = Matrix::Zero(steps, dyn);
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(steps, dyn);

  for (const TimedEvent& e : rec.events) {
    const int fi = schema.dynamic_index(e.feature_id);
    if (fi < 0)
      throw SchemaError("bucketize: unknown feature '" + e.feature_id +
                        "' in admission " + rec.admission_id);
    if (e.offset_hours < 0.0)
      throw SchemaError("bucketize: negative offset in admission " +
                        rec.admission_id);
    if (e.offset_hours >= window_hours) continue;
    const Index b = static_cast<Index>(e.offset_hours / bucket_hours);
    sums(b, fi) += e.value;
    counts(b, fi) += 1;
    out.mask(b, fi) = 1;
  }

  out.values = Matrix::Constant(steps, dyn, kNaN);
  for (Index f = 0; f < dyn; ++f) {
    if (schema.dynamic[static_cast<std::size_t>(f)].kind ==
        FeatureKind::Occurrence) {
      for (Index t = 0; t < steps; ++t)
        out.values(t, f) = out.mask(t, f) ? 1.0 : 0.0;
    } else {
      for (Index t = 0; t < steps; ++t)
        if (counts(t, f) > 0) out.values(t, f) = sums(t, f) / counts(t, f);
    }
  }
  return out;
}

Matrix impute(const RawBuckets& buckets, const CohortSchema& schema,
              const ImputeOptions& opts, std::vector<ImputeNote>* notes,
              const std::string& admission_id) {
  const Index steps = buckets.values.rows();
  const Index dyn = buckets.values.cols();
  if (schema.dynamic_count() != dyn)
    throw ShapeError("impute: bucket width does not match schema");
  Matrix out = buckets.values;

  for (Index f = 0; f < dyn; ++f) {
    const DynamicFeatureSpec& spec = schema.dynamic[static_cast<std::size_t>(f)];
    if (spec.kind == FeatureKind::Occurrence) continue;  // defined everywhere

    std::vector<double> observed;
    for (Index t = 0; t < steps; ++t)
      if (buckets.mask(t, f)) observed.push_back(buckets.values(t, f));

    if (observed.empty()) {
      out.col(f).setConstant(spec.cohort_default);
      if (notes != nullptr)
        notes->push_back({admission_id, spec.id,
                          "no observations; filled with cohort default"});
      continue;
    }

    double fill;
    if (opts.use_median) {
      std::vector<double> sorted = observed;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t n = sorted.size();
      fill = n % 2 == 1 ? sorted[n / 2]
                        : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    } else {
      fill = std::accumulate(observed.begin(), observed.end(), 0.0) /
             static_cast<double>(observed.size());
    }

    // Forward fill, then patient statistic for the leading gap.
    double last = kNaN;
    for (Index t = 0; t < steps; ++t) {
      if (buckets.mask(t, f))
        last = out(t, f);
      else
        out(t, f) = std::isnan(last) ? fill : last;
    }
  }
  return out;
}

Vector compute_delta_t(const MaskMatrix& mask) {
  const Index steps = mask.rows();
  Vector dt(steps);
  Index last_edge = 0;  // admission counts as an observation at edge 0
  for (Index t = 0; t < steps; ++t) {
    dt[t] = static_cast<double>(t + 1 - last_edge);
    if (mask.cols() > 0 && mask.row(t).maxCoeff() > 0) last_edge = t + 1;
  }
  return dt;
}

BucketedSequence assemble(const AdmissionRecord& rec,
                          const Matrix& imputed_dynamic,
                          const MaskMatrix& mask, const CohortSchema& schema) {
  const Index steps = imputed_dynamic.rows();
  const Index dyn = schema.dynamic_count();
  if (imputed_dynamic.cols() != dyn || mask.rows() != steps ||
      mask.cols() != dyn)
    throw ContractError("assemble: bucket/mask shape mismatch");
  if (!imputed_dynamic.allFinite())
    throw ContractError("assemble: dynamic features contain missing values");

  // Constant tail: one-hot statics in schema order, then age and sex.
  std::vector<double> tail;
  for (const StaticFeatureSpec& f : schema.statics) {
    const auto it = rec.static_features.find(f.id);
    if (it == rec.static_features.end())
      throw SchemaError("assemble: admission " + rec.admission_id +
                        " missing static feature " + f.id);
    if (f.categorical) {
      if (!std::holds_alternative<std::string>(it->second))
        throw SchemaError("assemble: static feature " + f.id +
                          " must be categorical");
      const int idx = vocab_index(f.vocabulary,
                                  std::get<std::string>(it->second), f.id);
      for (std::size_t v = 0; v < f.vocabulary.size(); ++v)
        tail.push_back(v == static_cast<std::size_t>(idx) ? 1.0 : 0.0);
    } else {
      if (!std::holds_alternative<double>(it->second))
        throw SchemaError("assemble: static feature " + f.id +
                          " must be numeric");
      tail.push_back(std::get<double>(it->second));
    }
  }
  tail.push_back(rec.age / 100.0);  // keep age on the scale of other inputs
  const int sex = vocab_index(schema.sex_vocabulary, rec.sex, "sex");
  for (std::size_t v = 0; v < schema.sex_vocabulary.size(); ++v)
    tail.push_back(v == static_cast<std::size_t>(sex) ? 1.0 : 0.0);

  BucketedSequence seq;
  seq.features = Matrix::Zero(steps, schema.feature_dim());
  seq.features.leftCols(dyn) = imputed_dynamic;
  for (Index t = 0; t < steps; ++t)
    for (std::size_t j = 0; j < tail.size(); ++j)
      seq.features(t, dyn + static_cast<Index>(j)) = tail[j];
  seq.raw_mask = mask;
  seq.delta_t = compute_delta_t(mask);
  seq.stage_class = map_icd_to_stage(rec.icd_code).value_or(-1);
  seq.mortality = rec.mortality;
  return seq;
}

std::vector<CohortSplit> kfold_split(Index n, int k,
                                     double validation_fraction, Rng& rng) {
  if (k < 2) throw ArgumentError("kfold_split: k must be >= 2");
  if (n < k)
    throw ArgumentError("kfold_split: n=" + std::to_string(n) +
                        " smaller than k=" + std::to_string(k));
  if (validation_fraction < 0.0 || validation_fraction >= 1.0)
    throw ArgumentError("kfold_split: validation_fraction out of range");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  rng.shuffle(order);

  // First n mod k folds take one extra index.
  std::vector<std::vector<Index>> folds(static_cast<std::size_t>(k));
  const Index base = n / k;
  const Index extra = n % k;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const Index size = base + (f < extra ? 1 : 0);
    for (Index i = 0; i < size; ++i)
      folds[static_cast<std::size_t>(f)].push_back(order[pos++]);
  }

  std::vector<CohortSplit> splits;
  for (int f = 0; f < k; ++f) {
    CohortSplit s;
    s.test = folds[static_cast<std::size_t>(f)];
    std::vector<Index> pool;
    for (int other = 0; other < k; ++other)
      if (other != f)
        pool.insert(pool.end(), folds[static_cast<std::size_t>(other)].begin(),
                    folds[static_cast<std::size_t>(other)].end());
    rng.shuffle(pool);
    const std::size_t val_count = static_cast<std::size_t>(
        std::llround(validation_fraction * static_cast<double>(pool.size())));
    s.validation.assign(pool.begin(),
                        pool.begin() + static_cast<std::ptrdiff_t>(val_count));
    s.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(val_count),
                   pool.end());
    splits.push_back(std::move(s));
  }
  return splits;
}

std::vector<Index> oversample_minority(const std::vector<Index>& indices,
                                       const std::vector<int>& labels,
                                       Rng& rng, std::ostream* warn) {
  if (indices.size() != labels.size())
    throw ContractError("oversample_minority: index/label length mismatch");
  std::map<int, std::vector<Index>> by_class;
  for (std::size_t i = 0; i < indices.size(); ++i)
    by_class[labels[i]].push_back(indices[i]);
  if (by_class.size() < 2) {
    if (warn != nullptr)
      *warn << "oversample_minority: single class present, nothing to do\n";
    return indices;
  }
  std::size_t majority = 0;
  for (const auto& [label, members] : by_class)
    majority = std::max(majority, members.size());

  std::vector<Index> out = indices;
  for (const auto& [label, members] : by_class)
    for (std::size_t i = members.size(); i < majority; ++i)
      out.push_back(members[rng.uniform_int(members.size())]);
  return out;
}

namespace {

constexpr char kDatasetMagic[4] = {'C', 'K', 'D', 'B'};
constexpr std::uint32_t kDatasetVersion = 1;

void put(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void get(std::ifstream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw ContractError("dataset: truncated file");
}

template <typename T>
void put_pod(std::ofstream& out, T v) {
  put(out, &v, sizeof(T));
}

template <typename T>
T get_pod(std::ifstream& in) {
  T v;
  get(in, &v, sizeof(T));
  return v;
}

void put_string(std::ofstream& out, const std::string& s) {
  put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  put(out, s.data(), s.size());
}

std::string get_string(std::ifstream& in) {
  const std::uint32_t len = get_pod<std::uint32_t>(in);
  std::string s(len, '\0');
  get(in, s.data(), len);
  return s;
}

void put_matrix(std::ofstream& out, const Matrix& m) {
  put_pod<std::int64_t>(out, m.rows());
  put_pod<std::int64_t>(out, m.cols());
  put(out, m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

Matrix get_matrix(std::ifstream& in) {
  const std::int64_t rows = get_pod<std::int64_t>(in);
  const std::int64_t cols = get_pod<std::int64_t>(in);
  Matrix m(rows, cols);
  get(in, m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  return m;
}

}  // namespace

void save_dataset(const std::string& path, const SequenceDataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContractError("dataset: cannot open " + path);
  put(out, kDatasetMagic, 4);
  put_pod(out, kDatasetVersion);
  put_pod(out, ds.schema_hash);
  put_pod<std::int64_t>(out, ds.dynamic_count);
  put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ds.feature_names.size()));
  for (const std::string& name : ds.feature_names) put_string(out, name);
  put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ds.records.size()));
  for (const SequenceRecord& r : ds.records) {
    put_string(out, r.admission_id);
    put_pod<std::uint8_t>(out, r.mortality_eligible ? 1 : 0);
    put_pod<std::int8_t>(out, static_cast<std::int8_t>(r.seq.stage_class));
    put_pod<std::uint8_t>(out, static_cast<std::uint8_t>(r.seq.mortality));
    put_matrix(out, r.seq.features);
    put_pod<std::int64_t>(out, r.seq.raw_mask.rows());
    put_pod<std::int64_t>(out, r.seq.raw_mask.cols());
    put(out, r.seq.raw_mask.data(),
        static_cast<std::size_t>(r.seq.raw_mask.size()));
    put_pod<std::int64_t>(out, r.seq.delta_t.size());
    put(out, r.seq.delta_t.data(),
        static_cast<std::size_t>(r.seq.delta_t.size()) * sizeof(double));
  }
  if (!out) throw ContractError("dataset: write failed for " + path);
}

SequenceDataset load_dataset(const std::string& path,
                             std::optional<std::uint64_t> expected_schema_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("dataset: cannot open " + path);
  char magic[4];
  get(in, magic, 4);
  if (std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw ContractError("dataset: bad magic in " + path);
  if (get_pod<std::uint32_t>(in) != kDatasetVersion)
    throw ContractError("dataset: unsupported version in " + path);

  SequenceDataset ds;
  ds.schema_hash = get_pod<std::uint64_t>(in);
  if (expected_schema_hash.has_value() && *expected_schema_hash != ds.schema_hash)
    throw SchemaError("dataset: schema hash mismatch for " + path);
  ds.dynamic_count = get_pod<std::int64_t>(in);
  const std::uint32_t names = get_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < names; ++i)
    ds.feature_names.push_back(get_string(in));
  const std::uint32_t count = get_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    SequenceRecord r;
    r.admission_id = get_string(in);
    r.mortality_eligible = get_pod<std::uint8_t>(in) != 0;
    r.seq.stage_class = get_pod<std::int8_t>(in);
    r.seq.mortality = get_pod<std::uint8_t>(in);
    r.seq.features = get_matrix(in);
    const std::int64_t mrows = get_pod<std::int64_t>(in);
    const std::int64_t mcols = get_pod<std::int64_t>(in);
    r.seq.raw_mask.resize(mrows, mcols);
    get(in, r.seq.raw_mask.data(), static_cast<std::size_t>(mrows * mcols));
    const std::int64_t dts = get_pod<std::int64_t>(in);
    r.seq.delta_t.resize(dts);
    get(in, r.seq.delta_t.data(), static_cast<std::size_t>(dts) * sizeof(double));
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace ckdseq

#include "ckdseq/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace ckdseq {

namespace {

// ICD codes per stage; second entry empty where ICD-9 has no counterpart.
constexpr const char* kIcd10[8] = {"N18.1", "N18.2", "N18.3", "N18.4",
                                   "N18.5", "N18.6", "N18.8", "N18.9"};
constexpr const char* kIcd9[8] = {"585.1", "585.2", "585.3", "585.4",
                                  "585.5", "585.6", "",      "585.9"};

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("spec file: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ConfigError("spec file: expected key = value at line " +
                          std::to_string(lineno));
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("spec file: bad numeric value for " + key + ": '" +
                      value + "'");
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (cohort_size < 0) throw ConfigError("synth spec: negative cohort size");
  double total = 0.0;
  for (double w : stage_weights) {
    if (w < 0.0) throw ConfigError("synth spec: negative stage weight");
    total += w;
  }
  if (total <= 0.0) throw ConfigError("synth spec: all stage weights zero");
  if (continuous_features < 0 || occurrence_features < 0 ||
      static_features < 0)
    throw ConfigError("synth spec: negative feature count");
  if (continuous_features + occurrence_features < 1)
    throw ConfigError("synth spec: at least one dynamic feature required");
  if (noise_sd < 0.0 || gap_jitter < 0.0 || gap_base_hours <= 0.0)
    throw ConfigError("synth spec: negative noise/gap parameters");
  if (occ_rate_base < 0.0 || occ_rate_step < 0.0)
    throw ConfigError("synth spec: negative occurrence rates");
  if (mortality_base_rate < 0.0 || mortality_base_rate > 1.0)
    throw ConfigError("synth spec: mortality base rate out of [0,1]");
  if (unmapped_icd_rate < 0.0 || unmapped_icd_rate > 1.0)
    throw ConfigError("synth spec: unmapped ICD rate out of [0,1]");
  if (window_hours < 1) throw ConfigError("synth spec: window too small");
}

SynthSpec parse_synth_spec(const std::string& path) {
  const auto kv = read_kv_file(path);
  SynthSpec s;
  for (const auto& [key, value] : kv) {
    if (key == "cohort_size")
      s.cohort_size = static_cast<Index>(to_double(key, value));
    else if (key == "stage_weights") {
      std::stringstream ss(value);
      std::string item;
      std::size_t i = 0;
      while (std::getline(ss, item, ',')) {
        if (i >= s.stage_weights.size())
          throw ConfigError("spec file: stage_weights needs 8 entries");
        s.stage_weights[i++] = to_double(key, item);
      }
      if (i != s.stage_weights.size())
        throw ConfigError("spec file: stage_weights needs 8 entries");
    } else if (key == "continuous_features")
      s.continuous_features = static_cast<int>(to_double(key, value));
    else if (key == "occurrence_features")
      s.occurrence_features = static_cast<int>(to_double(key, value));
    else if (key == "static_features")
      s.static_features = static_cast<int>(to_double(key, value));
    else if (key == "level_base")
      s.level_base = to_double(key, value);
    else if (key == "level_step")
      s.level_step = to_double(key, value);
    else if (key == "drift_base")
      s.drift_base = to_double(key, value);
    else if (key == "drift_step")
      s.drift_step = to_double(key, value);
    else if (key == "noise_sd")
      s.noise_sd = to_double(key, value);
    else if (key == "gap_base_hours")
      s.gap_base_hours = to_double(key, value);
    else if (key == "gap_step_hours")
      s.gap_step_hours = to_double(key, value);
    else if (key == "gap_jitter")
      s.gap_jitter = to_double(key, value);
    else if (key == "occ_rate_base")
      s.occ_rate_base = to_double(key, value);
    else if (key == "occ_rate_step")
      s.occ_rate_step = to_double(key, value);
    else if (key == "mortality_base_rate")
      s.mortality_base_rate = to_double(key, value);
    else if (key == "mortality_stage_coef")
      s.mortality_stage_coef = to_double(key, value);
    else if (key == "mortality_decline_coef")
      s.mortality_decline_coef = to_double(key, value);
    else if (key == "unmapped_icd_rate")
      s.unmapped_icd_rate = to_double(key, value);
    else if (key == "window_hours")
      s.window_hours = static_cast<int>(to_double(key, value));
    else if (key == "seed")
      s.seed = static_cast<std::uint64_t>(to_double(key, value));
    else
      throw ConfigError("spec file: unknown key '" + key + "'");
  }
  s.validate();
  return s;
}

void write_synth_spec(const std::string& path, const SynthSpec& s) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("spec file: cannot open " + path);
  out << "cohort_size = " << s.cohort_size << "\n";
  out << "stage_weights = ";
  for (std::size_t i = 0; i < s.stage_weights.size(); ++i)
    out << (i ? "," : "") << s.stage_weights[i];
  out << "\n";
  out << "continuous_features = " << s.continuous_features << "\n";
  out << "occurrence_features = " << s.occurrence_features << "\n";
  out << "static_features = " << s.static_features << "\n";
  out << "level_base = " << s.level_base << "\n";
  out << "level_step = " << s.level_step << "\n";
  out << "drift_base = " << s.drift_base << "\n";
  out << "drift_step = " << s.drift_step << "\n";
  out << "noise_sd = " << s.noise_sd << "\n";
  out << "gap_base_hours = " << s.gap_base_hours << "\n";
  out << "gap_step_hours = " << s.gap_step_hours << "\n";
  out << "gap_jitter = " << s.gap_jitter << "\n";
  out << "occ_rate_base = " << s.occ_rate_base << "\n";
  out << "occ_rate_step = " << s.occ_rate_step << "\n";
  out << "mortality_base_rate = " << s.mortality_base_rate << "\n";
  out << "mortality_stage_coef = " << s.mortality_stage_coef << "\n";
  out << "mortality_decline_coef = " << s.mortality_decline_coef << "\n";
  out << "unmapped_icd_rate = " << s.unmapped_icd_rate << "\n";
  out << "window_hours = " << s.window_hours << "\n";
  if (s.seed.has_value()) out << "seed = " << *s.seed << "\n";
}

CohortSchema synth_schema(const SynthSpec& spec) {
  spec.validate();
  CohortSchema schema;
  for (int j = 0; j < spec.continuous_features; ++j) {
    DynamicFeatureSpec f;
    f.id = "lab" + std::to_string(j);
    f.kind = FeatureKind::Continuous;
    f.cohort_default = spec.level_base * (0.6 + 0.2 * j);
    schema.dynamic.push_back(std::move(f));
  }
  for (int j = 0; j < spec.occurrence_features; ++j) {
    DynamicFeatureSpec f;
    f.id = "proc" + std::to_string(j);
    f.kind = FeatureKind::Occurrence;
    schema.dynamic.push_back(std::move(f));
  }
  for (int j = 0; j < spec.static_features; ++j) {
    StaticFeatureSpec f;
    f.id = "static" + std::to_string(j);
    f.categorical = false;
    schema.statics.push_back(std::move(f));
  }
  StaticFeatureSpec adm;
  adm.id = "admission_type";
  adm.categorical = true;
  adm.vocabulary = {"elective", "emergency"};
  schema.statics.push_back(std::move(adm));
  return schema;
}

std::vector<AdmissionRecord> generate_synthetic_cohort(const SynthSpec& spec,
                                                       Rng& rng) {
  spec.validate();
  if (spec.cohort_size == 0) throw ConfigError("synth spec: empty cohort");

  double total_weight = 0.0;
  for (double w : spec.stage_weights) total_weight += w;

  std::vector<AdmissionRecord> cohort;
  cohort.reserve(static_cast<std::size_t>(spec.cohort_size));

  for (Index n = 0; n < spec.cohort_size; ++n) {
    // Stage from the configured mixture.
    double pick = rng.uniform() * total_weight;
    int stage = 0;
    for (int s = 0; s < 8; ++s) {
      pick -= spec.stage_weights[static_cast<std::size_t>(s)];
      if (pick < 0.0) {
        stage = s;
        break;
      }
    }

    AdmissionRecord rec;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "S%05lld", static_cast<long long>(n));
    rec.subject_id = buf;
    std::snprintf(buf, sizeof(buf), "A%05lld", static_cast<long long>(n));
    rec.admission_id = buf;
    rec.age = rng.uniform(40.0, 88.0);
    rec.sex = rng.bernoulli(0.5) ? "F" : "M";

    if (rng.bernoulli(spec.unmapped_icd_rate)) {
      rec.icd_code = "585.8";  // outside the stage taxonomy
    } else if (stage != 6 && rng.bernoulli(0.5)) {
      rec.icd_code = kIcd9[stage];
    } else {
      rec.icd_code = kIcd10[stage];
    }

    const double level = spec.level_base + spec.level_step * stage;
    const double drift = spec.drift_base + spec.drift_step * stage;
    const double gap_mean = spec.gap_base_hours + spec.gap_step_hours * stage;

    for (int j = 0; j < spec.continuous_features; ++j) {
      const double scale = 0.6 + 0.2 * j;
      double t = rng.uniform(0.0, 0.5);
      while (t < spec.window_hours + 6.0) {
        TimedEvent e;
        e.feature_id = "lab" + std::to_string(j);
        e.offset_hours = t;
        e.value = level * scale + drift * t +
                  (spec.noise_sd > 0.0 ? rng.normal(0.0, spec.noise_sd) : 0.0);
        rec.events.push_back(std::move(e));
        t += std::max(0.25, gap_mean + (spec.gap_jitter > 0.0
                                            ? rng.normal(0.0, spec.gap_jitter)
                                            : 0.0));
      }
    }
    for (int j = 0; j < spec.occurrence_features; ++j) {
      const double rate = spec.occ_rate_base + spec.occ_rate_step * stage;
      if (rate <= 0.0) continue;
      double t = rng.exponential(1.0 / rate);
      while (t < spec.window_hours + 6.0) {
        TimedEvent e;
        e.feature_id = "proc" + std::to_string(j);
        e.offset_hours = t;
        e.value = 1.0;
        rec.events.push_back(std::move(e));
        t += rng.exponential(1.0 / rate);
      }
    }

    for (int j = 0; j < spec.static_features; ++j)
      rec.static_features["static" + std::to_string(j)] = rng.normal(0.0, 1.0);
    rec.static_features["admission_type"] =
        std::string(rng.bernoulli(0.3) ? "elective" : "emergency");

    const double decline = std::max(0.0, -drift);
    const double p_death = std::clamp(
        spec.mortality_base_rate *
            (1.0 + spec.mortality_stage_coef * (stage - 3.5) +
             spec.mortality_decline_coef * decline),
        0.0, 0.95);
    rec.mortality = rng.bernoulli(p_death) ? 1 : 0;
    if (rec.mortality == 1) {
      // Mostly past the 74h horizon; a small share dies early and exercises
      // the mortality-task exclusion.
      rec.mortality_offset_hours =
          rng.bernoulli(0.1) ? rng.uniform(4.0, spec.window_hours + 2.0)
                             : spec.window_hours + 2.0 + rng.exponential(120.0);
    }

    cohort.push_back(std::move(rec));
  }
  return cohort;
}

}  // namespace ckdseq

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ckdseq/data.hpp"

namespace ckdseq {

// Synthetic cohort control knobs. The default configuration mixes a value
// signal (per-stage feature level) with mildly irregular sampling, so both
// vanilla and time-aware encoders have something to learn.
struct SynthSpec {
  Index cohort_size = 500;
  std::array<double, 8> stage_weights{1, 1, 1, 1, 1, 1, 1, 1};

  int continuous_features = 3;
  int occurrence_features = 1;
  int static_features = 2;

  // Latent renal-function trajectory: level + drift per stage, observed with
  // Gaussian noise.
  double level_base = 0.4;
  double level_step = 0.25;
  double drift_base = 0.0;
  double drift_step = 0.0;  // per hour
  double noise_sd = 0.05;

  // Sampling process: mean inter-observation gap per stage, with jitter.
  double gap_base_hours = 1.0;
  double gap_step_hours = 0.0;
  double gap_jitter = 0.35;

  // Occurrence-event rates per hour.
  double occ_rate_base = 0.08;
  double occ_rate_step = 0.012;

  // Mortality: p = clamp(base * (1 + stage_coef*(stage-3.5)
  //                               + decline_coef*max(0,-drift)), 0, 0.95).
  double mortality_base_rate = 0.25;
  double mortality_stage_coef = 0.12;
  double mortality_decline_coef = 1.0;

  // Fraction of admissions assigned an ICD code outside the stage taxonomy.
  double unmapped_icd_rate = 0.0;

  int window_hours = 72;

  // Default seed for cohort generation; an explicit CLI --seed wins.
  std::optional<std::uint64_t> seed;

  void validate() const;
};

SynthSpec parse_synth_spec(const std::string& path);
void write_synth_spec(const std::string& path, const SynthSpec& spec);

CohortSchema synth_schema(const SynthSpec& spec);

std::vector<AdmissionRecord> generate_synthetic_cohort(const SynthSpec& spec,
                                                       Rng& rng);

}  // namespace ckdseq

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyperinf/dense.hpp"
#include "hyperinf/fisher.hpp"
#include "hyperinf/hyperpower.hpp"

namespace hyperinf {

struct BlockSpec {
  std::string name;
  std::size_t d = 0;
  std::size_t r = 0;
};

// Per-example training gradients and the averaged validation gradient, for
// L parameter blocks. Storage is block-major: train_grads[l][k] is block l
// of example k.
struct GradientDump {
  std::vector<BlockSpec> blocks;
  std::vector<std::vector<GradientBlock>> train_grads;
  std::vector<GradientBlock> val_grads;
  std::vector<std::string> example_ids;

  std::size_t n_examples() const noexcept { return example_ids.size(); }
  std::size_t n_blocks() const noexcept { return blocks.size(); }
  // Throws DataError on any missing block, shape mismatch, or non-finite value.
  void validate() const;
};

enum class DampingMode {
  PerBlock,  // lambda_l = coefficient * (n d_l)^{-1} sum_i ||g_i||_F^2
  Fixed,     // the same lambda for every block
};

struct Damping {
  DampingMode mode = DampingMode::PerBlock;
  double lambda = 0.01;
  double coefficient = kDampingCoefficient;
  double floor = kDampingFloor;

  static Damping per_block(double coefficient = kDampingCoefficient);
  static Damping fixed(double lambda);

  double for_block(std::span<const GradientBlock> grads) const;
  nlohmann::ordered_json to_json() const;
};

struct InfluenceReport {
  std::string estimator;
  std::vector<std::string> example_ids;
  Vector scores;
  // n x L; scores[k] is the left-to-right sum of row k.
  DenseMatrix per_block_scores;
  // Example indices sorted by ascending score, ties by index; NaN last.
  std::vector<std::size_t> ranking_ascending;
  nlohmann::ordered_json config;
  std::vector<double> block_damping;
  std::vector<std::string> warnings;
  bool diverged = false;
  // Largest number of doubles held at once in curvature matrices and their
  // inverses while scoring.
  std::size_t peak_curvature_elements = 0;

  std::size_t size() const noexcept { return scores.size(); }
};

// Refuses blocks whose flattened FIM would exceed this many entries.
inline constexpr std::size_t kExactElementCap = 100'000'000;

enum class ExactSolver { Lu, Cg };

// -sum_l vec(v_l)^T (FIM_l + lambda_l I)^{-1} vec(g_{k,l}); the reference
// every approximate estimator is measured against.
InfluenceReport score_exact(const GradientDump& dump, const Damping& damping, ExactSolver solver = ExactSolver::Lu);

struct HyperinfOptions {
  Inverter inverter = Inverter::Schulz;
  // Invert the flattened (rd x rd) FIM instead of the d x d GFIM.
  bool flatten_first = false;
};

// Per block: A_l = GFIM_l + lambda_l I_d inverted once, h_l = v_l^T A_l^{-1},
// score_k = -sum_l trace(h_l g_{k,l}).
InfluenceReport score_hyperinf(const GradientDump& dump, const IterationConfig& cfg, const Damping& damping,
                               const HyperinfOptions& options = {});

// Sherman-Morrison form, using inner products only.
InfluenceReport score_datainf(const GradientDump& dump, const Damping& damping);

// The dense d x d (flattened rd x rd) matrix that score_datainf applies
// implicitly: (1/(n lambda)) sum_i (I - g_i g_i^T / (lambda + g_i^T g_i)).
DenseMatrix datainf_dense_inverse(std::span<const GradientBlock> grads, double lambda);

inline constexpr std::size_t kLissaDefaultIters = 10;

// r_j = v + (I - (FIM + lambda I)) r_{j-1} per block, FIM applied as an operator.
InfluenceReport score_lissa(const GradientDump& dump, std::size_t iters, const Damping& damping);

// -sum_l <v_l, g_{k,l}>_F.
InfluenceReport score_tracin(const GradientDump& dump);

enum class RankMode { MostHelpful, MostHarmful };

// First ceil(k_percent * n / 100) example indices: ascending scores for
// MostHelpful, descending for MostHarmful, ties by ascending index, NaN last.
std::vector<std::size_t> rank_examples(const InfluenceReport& report, RankMode mode, double k_percent);

// Same estimators by name: "hyperinf", "hyperinf_fim", "datainf", "lissa",
// "tracin", "exact".
struct EstimatorSettings {
  IterationConfig iteration;
  Damping damping;
  std::size_t lissa_iters = kLissaDefaultIters;
  Inverter inverter = Inverter::Schulz;
};
InfluenceReport run_estimator(const std::string& name, const GradientDump& dump, const EstimatorSettings& settings);
const std::vector<std::string>& estimator_names();

}  // namespace hyperinf

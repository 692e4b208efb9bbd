#pragma once

// Finite-difference verification of every model layer and of the full
// EU/EA pair models on small seeded graphs.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pdgsim/model.hpp"

namespace pdgsim {

inline constexpr double kGradcheckTolerance = 1e-3;
inline constexpr double kGradcheckStep = 1e-4;

struct GradcheckLine {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t entries = 0;
  std::size_t skipped = 0;
  std::string worst_param;
};

// Narrow configuration so every parameter entry can be probed.
ModelConfig gradcheck_config(Variant variant);

// Random PDG with `n` nodes: uniform kinds, each ordered pair gets a control
// and/or data edge with probability 0.3.
Pdg random_pdg(int n, std::mt19937_64& rng);

// One line per layer plus "full_eu" and "full_ea". With `sabotage`, each loss
// gets an extra term whose reverse-mode gradient is wrong on purpose.
std::vector<GradcheckLine> run_gradchecks(std::uint64_t seed, bool sabotage = false);

bool gradchecks_pass(const std::vector<GradcheckLine>& lines);

}  // namespace pdgsim

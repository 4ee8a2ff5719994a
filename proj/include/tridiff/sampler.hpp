#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "tridiff/corruption.hpp"
#include "tridiff/rng.hpp"

namespace tridiff {

struct ScheduleOrderError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Reverse posterior for a masked position: a convex combination of MASK and
// the predicted clean-token distribution. xhat0 runs over vocab+1 entries with
// the MASK slot last and (approximately) zero mass there; the result places
// (1-alpha_s)/(1-alpha_t) on MASK and the rest on xhat0.
std::vector<double> reverse_step_distribution(const std::vector<double>& xhat0,
                                              double alpha_s, double alpha_t);

enum class DecodeRule { Sample, ArgmaxFinal };

// Predictor interface for the reverse loop: given the current (partially
// masked) tokens of every modality and the timestep, return per-position
// xhat0 rows (vocab+1 wide, zero MASK mass) for each target modality.
// Non-target entries may be left empty.
using XHat0Fn = std::function<std::array<std::vector<std::vector<double>>, 3>(
    const CorruptedSample& state, double t, const TaskSpec& task)>;

struct DenoiseResult {
    std::array<std::vector<int>, 3> tokens;  // indexed by Modality
};

// T-step reverse loop shared by all tasks: targets start fully masked (BQA:
// answer span only), conditions stay clean, revealed positions never change.
DenoiseResult denoise_loop(const SampleTokens& inputs, const Vocabs& vocabs,
                           const TaskSpec& task, const XHat0Fn& predictor, int num_steps,
                           Rng& rng, DecodeRule rule = DecodeRule::Sample);

}  // namespace tridiff

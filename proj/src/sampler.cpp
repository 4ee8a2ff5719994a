#include "tridiff/sampler.hpp"

#include <cmath>
#include <string>

#include "tridiff/schedule.hpp"

namespace tridiff {

std::vector<double> reverse_step_distribution(const std::vector<double>& xhat0,
                                              double alpha_s, double alpha_t) {
    if (!(alpha_s > alpha_t))
        throw ScheduleOrderError("reverse_step_distribution: alpha_s=" +
                                 std::to_string(alpha_s) + " must exceed alpha_t=" +
                                 std::to_string(alpha_t));
    if (xhat0.size() < 2)
        throw std::invalid_argument("reverse_step_distribution: xhat0 too short");
    double total = 0.0;
    for (double p : xhat0) total += p;
    if (std::fabs(total - 1.0) > 1e-9)
        throw std::invalid_argument("reverse_step_distribution: xhat0 sums to " +
                                    std::to_string(total) + ", expected 1");

    const double denom = 1.0 - alpha_t;
    const double mask_mass = (1.0 - alpha_s) / denom;
    // complement keeps the output convex by construction
    const double token_coef = 1.0 - mask_mass;
    std::vector<double> out(xhat0.size());
    const size_t mask_slot = xhat0.size() - 1;
    for (size_t v = 0; v < mask_slot; ++v) out[v] = token_coef * xhat0[v];
    out[mask_slot] = mask_mass + token_coef * xhat0[mask_slot];
    return out;
}

namespace {

size_t sample_categorical(const std::vector<double>& probs, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

size_t argmax_token(const std::vector<double>& probs, size_t mask_slot) {
    size_t best = 0;
    double best_p = -1.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        if (i == mask_slot) continue;
        if (probs[i] > best_p) {
            best_p = probs[i];
            best = i;
        }
    }
    return best;
}

}  // namespace

DenoiseResult denoise_loop(const SampleTokens& inputs, const Vocabs& vocabs,
                           const TaskSpec& task, const XHat0Fn& predictor, int num_steps,
                           Rng& rng, DecodeRule rule) {
    if (num_steps < 1) throw std::domain_error("denoise_loop: need at least one step");

    // initial state: target positions fully masked, conditions clean
    CorruptedSample state;
    state.t = 1.0;
    for (Modality m : kModalityOrder) {
        auto& dst = state.of(m);
        dst.role = task.role(m);
        dst.tokens = inputs.of(m);
        dst.mask.assign(dst.tokens.size(), 0);
        if (!task.is_target(m)) continue;
        const int mask = mask_id(vocabs.of(m));
        size_t begin = 0, end = dst.tokens.size();
        if (task.qa_layout && m == Modality::Text) {
            begin = static_cast<size_t>(inputs.question_len);
            end = begin + static_cast<size_t>(inputs.answer_len);
        }
        for (size_t i = begin; i < end; ++i) {
            dst.tokens[i] = mask;
            dst.mask[i] = 1;
        }
        for (size_t i = 0; i < dst.tokens.size(); ++i) {
            if ((i < begin || i >= end) && dst.tokens[i] == mask)
                throw std::invalid_argument(
                    "denoise_loop: condition span contains MASK tokens");
        }
    }
    for (Modality m : kModalityOrder) {
        if (task.is_target(m)) continue;
        const int mask = mask_id(vocabs.of(m));
        for (int tok : state.of(m).tokens)
            if (tok == mask)
                throw std::invalid_argument("denoise_loop: condition sequence for " +
                                            std::string(modality_name(m)) +
                                            " contains MASK tokens");
    }

    const auto grid = inference_grid(num_steps);
    for (int k = 0; k < num_steps; ++k) {
        const double t = grid[k];
        const double s = (k + 1 < num_steps) ? grid[k + 1] : 0.0;
        const double a_s = alpha(s), a_t = alpha(t);
        const bool final_step = (k + 1 == num_steps);

        auto xhat0 = predictor(state, t, task);

        for (Modality m : kModalityOrder) {
            if (!task.is_target(m)) continue;
            auto& mod = state.of(m);
            const int mask = mask_id(vocabs.of(m));
            const auto& rows = xhat0[static_cast<int>(m)];
            if (rows.size() != mod.tokens.size())
                throw std::runtime_error("denoise_loop: predictor returned " +
                                         std::to_string(rows.size()) + " rows for " +
                                         modality_name(m));
            for (size_t i = 0; i < mod.tokens.size(); ++i) {
                if (mod.tokens[i] != mask) continue;  // revealed tokens stay put
                const auto& row = rows[i];
                for (double p : row)
                    if (!std::isfinite(p))
                        throw NumericError(
                            "denoise_loop: non-finite predictor output at step " +
                            std::to_string(k) + " (" + modality_name(m) + " position " +
                            std::to_string(i) + ")");
                if (final_step && rule == DecodeRule::ArgmaxFinal) {
                    mod.tokens[i] = static_cast<int>(argmax_token(row, row.size() - 1));
                    continue;
                }
                auto dist = reverse_step_distribution(row, a_s, a_t);
                size_t drawn = sample_categorical(dist, rng);
                if (drawn != dist.size() - 1)
                    mod.tokens[i] = static_cast<int>(drawn);
                // drawing the MASK slot leaves the position masked
            }
        }
        state.t = s;
    }

    DenoiseResult out;
    for (Modality m : kModalityOrder) out.tokens[static_cast<int>(m)] = state.of(m).tokens;
    // final step has alpha_s = alpha(0) = 1, so no MASK can survive
    for (Modality m : kModalityOrder) {
        if (!task.is_target(m)) continue;
        const int mask = mask_id(vocabs.of(m));
        for (int tok : out.tokens[static_cast<int>(m)])
            if (tok == mask)
                throw std::logic_error("denoise_loop: MASK survived the final step");
    }
    return out;
}

}  // namespace tridiff

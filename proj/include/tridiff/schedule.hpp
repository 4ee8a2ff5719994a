#pragma once

#include <stdexcept>
#include <vector>

namespace tridiff {

// Cosine masking schedule: alpha(t) = cos(0.5*pi*t) is the probability that a
// token is still unmasked at time t; gamma(t) = 1 - alpha(t) is the mask
// ratio. Timesteps are drawn from p(t) = (2/pi) * (1 - (1-t)^2)^(-1/2).
struct NoiseSchedule {
    int num_inference_steps = 12;
    double t_min = 1e-3;  // training clamp; loss_weight diverges at t -> 0
};

double alpha(double t);           // t in [0,1]
double mask_ratio(double t);      // 1 - alpha(t)
double time_pdf(double t);        // t in (0,1]
double sample_timestep(double u); // inverse CDF, u in [0,1]
double loss_weight(double t);     // -alpha'(t) / (1 - alpha(t)), t in (0,1]

// descending inference grid {1, (T-1)/T, ..., 1/T}
std::vector<double> inference_grid(int num_steps);

}  // namespace tridiff

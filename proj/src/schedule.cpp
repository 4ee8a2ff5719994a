#include "tridiff/schedule.hpp"

#include <cmath>
#include <string>

namespace tridiff {

namespace {
constexpr double kPi = 3.14159265358979323846;

void require_unit_interval(double t, const char* fn) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::domain_error(std::string(fn) + ": t=" + std::to_string(t) +
                                " outside [0,1]");
}
}  // namespace

double alpha(double t) {
    require_unit_interval(t, "alpha");
    if (t == 1.0) return 0.0;  // cos(pi/2) rounds to ~6e-17; pin the endpoint
    return std::cos(0.5 * kPi * t);
}

double mask_ratio(double t) { return 1.0 - alpha(t); }

double time_pdf(double t) {
    if (!(t > 0.0 && t <= 1.0))
        throw std::domain_error("time_pdf: t=" + std::to_string(t) + " outside (0,1]");
    const double u = 1.0 - t;
    return (2.0 / kPi) / std::sqrt(1.0 - u * u);
}

double sample_timestep(double u) {
    if (!(u >= 0.0 && u <= 1.0))
        throw std::domain_error("sample_timestep: u=" + std::to_string(u) +
                                " outside [0,1]");
    return 1.0 - std::sin(0.5 * kPi * (1.0 - u));
}

double loss_weight(double t) {
    if (!(t > 0.0 && t <= 1.0))
        throw std::domain_error("loss_weight: t=" + std::to_string(t) + " outside (0,1]");
    const double half_pi_t = 0.5 * kPi * t;
    return 0.5 * kPi * std::sin(half_pi_t) / (1.0 - std::cos(half_pi_t));
}

std::vector<double> inference_grid(int num_steps) {
    if (num_steps < 1) throw std::domain_error("inference_grid: need at least one step");
    std::vector<double> grid(num_steps);
    for (int k = 0; k < num_steps; ++k)
        grid[k] = static_cast<double>(num_steps - k) / static_cast<double>(num_steps);
    return grid;
}

}  // namespace tridiff

#include "tridiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tridiff {

double pcc(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw MetricError("pcc: vectors must have equal length >= 2");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw MetricError("pcc: zero variance makes the correlation undefined");
    return sxy / std::sqrt(sxx * syy);
}

double mse(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty())
        throw MetricError("mse: vectors must have equal nonzero length");
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return s / static_cast<double>(x.size());
}

std::vector<double> rdm(const std::vector<double>& features, int64_t n, int64_t e) {
    if (n < 3) throw MetricError("rdm: need at least 3 items");
    if (static_cast<int64_t>(features.size()) != n * e)
        throw MetricError("rdm: features size does not match n*e");
    std::vector<double> out(n * n, 0.0);
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> ri(features.begin() + i * e, features.begin() + (i + 1) * e);
        for (int64_t j = i + 1; j < n; ++j) {
            std::vector<double> rj(features.begin() + j * e, features.begin() + (j + 1) * e);
            double d;
            try {
                d = 1.0 - pcc(ri, rj);
            } catch (const MetricError&) {
                throw MetricError("rdm: degenerate (zero variance) row " +
                                  std::to_string(i) + " or " + std::to_string(j));
            }
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    return out;
}

double rsa(const std::vector<double>& rdm_a, const std::vector<double>& rdm_b, int64_t n) {
    if (n < 3) throw MetricError("rsa: need at least 3 items for the upper triangle");
    if (static_cast<int64_t>(rdm_a.size()) != n * n ||
        static_cast<int64_t>(rdm_b.size()) != n * n)
        throw MetricError("rsa: RDM sizes do not match n");
    std::vector<double> ua, ub;
    ua.reserve(n * (n - 1) / 2);
    ub.reserve(n * (n - 1) / 2);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) {
            ua.push_back(rdm_a[i * n + j]);
            ub.push_back(rdm_b[i * n + j]);
        }
    return pcc(ua, ub);
}

double retrieval_topk(const std::vector<double>& queries, const std::vector<double>& gallery,
                      int64_t n, int64_t e, int64_t k) {
    if (k <= 0) throw std::domain_error("retrieval_topk: k must be positive");
    if (k > n) throw std::domain_error("retrieval_topk: k exceeds pool size");
    if (static_cast<int64_t>(queries.size()) != n * e ||
        static_cast<int64_t>(gallery.size()) != n * e)
        throw MetricError("retrieval_topk: embedding sizes do not match n*e");

    std::vector<double> gnorm(n);
    for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t c = 0; c < e; ++c) s += gallery[j * e + c] * gallery[j * e + c];
        gnorm[j] = std::sqrt(s) + 1e-300;
    }
    int64_t hits = 0;
    std::vector<double> sims(n);
    for (int64_t i = 0; i < n; ++i) {
        double qs = 0.0;
        for (int64_t c = 0; c < e; ++c) qs += queries[i * e + c] * queries[i * e + c];
        const double qn = std::sqrt(qs) + 1e-300;
        for (int64_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (int64_t c = 0; c < e; ++c) dot += queries[i * e + c] * gallery[j * e + c];
            sims[j] = dot / (qn * gnorm[j]);
        }
        // rank of the true match: count strictly better plus earlier ties
        const double true_sim = sims[i];
        int64_t rank = 1;
        for (int64_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (sims[j] > true_sim || (sims[j] == true_sim && j < i)) ++rank;
        }
        if (rank <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace tridiff

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace tridiff {

struct MetricError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Pearson correlation; throws on zero variance
double pcc(const std::vector<double>& x, const std::vector<double>& y);

double mse(const std::vector<double>& x, const std::vector<double>& y);

// representational dissimilarity matrix with 1 - Pearson entries; rows of
// `features` are items. Returns a symmetric n x n matrix with zero diagonal.
std::vector<double> rdm(const std::vector<double>& features, int64_t n, int64_t e);

// Pearson correlation of the strictly upper triangles of two RDMs
double rsa(const std::vector<double>& rdm_a, const std::vector<double>& rdm_b, int64_t n);

// fraction of queries whose true match (same row index in the gallery) ranks
// within the top k by cosine similarity; ties break toward lower gallery index
double retrieval_topk(const std::vector<double>& queries, const std::vector<double>& gallery,
                      int64_t n, int64_t e, int64_t k);

}  // namespace tridiff

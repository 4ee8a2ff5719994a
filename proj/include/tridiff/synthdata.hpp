#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tridiff/rng.hpp"

namespace tridiff {

// Synthetic tri-modal data: a latent concept drives a linear-Gaussian brain
// vector, templated image/text token sequences, bag-of-token semantic
// embeddings, and attribute question/answer pairs.
struct SynthConfig {
    int concepts = 8;
    int samples = 512;
    int n_voxel = 256;
    int image_vocab = 64;
    int text_vocab = 32;
    int image_len = 16;
    int text_len = 16;
    int question_len = 4;
    int answer_len = 4;
    int attr_slots = 3;
    int attr_values = 8;
    double noise_sigma = 0.1;
    double token_noise = 0.05;
    double val_frac = 0.125;
    double test_frac = 0.125;
    int repeats = 1;     // average this many noise draws per brain vector
    int embed_dim = 64;  // width of the synthetic semantic embeddings
    uint64_t seed = 1;

    void validate() const;
    uint64_t hash() const;
};

struct TriModalSample {
    int concept_id = 0;
    std::vector<double> brain;
    std::vector<int> image_tokens;
    std::vector<int> text_tokens;  // whole-caption layout
    std::vector<int> question;     // BQA question span
    std::vector<int> answer;       // BQA answer span
    int qa_slot = 0;
    int qa_value = 0;
    std::vector<double> f_v;  // semantic embedding of the image content
    std::vector<double> f_c;  // semantic embedding of the text content
};

struct Dataset {
    SynthConfig config;
    std::vector<double> mixing;  // n_voxel x concepts
    std::vector<TriModalSample> samples;
    std::vector<int> train_idx, val_idx, test_idx;
};

// text vocabulary layout helpers
int pad_token();
int question_token(int slot);
int value_token(const SynthConfig& cfg, int slot, int value);
int attribute_value(const SynthConfig& cfg, int concept, int slot);

Dataset generate(const SynthConfig& cfg);

// deterministic question/answer spans for (concept, slot)
void make_qa(const SynthConfig& cfg, int concept, int slot, std::vector<int>& question,
             std::vector<int>& answer);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace tridiff

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tridiff/rng.hpp"

namespace tridiff {

enum class Modality : int { Image = 0, Text = 1, Brain = 2 };
constexpr int kNumModalities = 3;
constexpr std::array<Modality, 3> kModalityOrder = {Modality::Image, Modality::Text,
                                                    Modality::Brain};

const char* modality_name(Modality m);

// per-task role of a modality
enum class Role : int { Condition, Target, Excluded };

struct TokenSeq {
    Modality modality;
    std::vector<int> tokens;  // ids in [0, vocab) plus the reserved mask id
};

// the reserved MASK id for a modality sits one past its vocabulary
inline int mask_id(int vocab) { return vocab; }

struct TaskSpec {
    std::string name;
    std::array<Role, 3> roles;  // indexed by Modality
    bool qa_layout = false;     // text split into question (condition) + answer (target)

    Role role(Modality m) const { return roles[static_cast<int>(m)]; }
    bool is_target(Modality m) const { return role(m) == Role::Target; }
    bool is_condition(Modality m) const { return role(m) == Role::Condition; }
    bool is_excluded(Modality m) const { return role(m) == Role::Excluded; }
};

// the seven task configurations; names are the CLI vocabulary
const std::vector<TaskSpec>& all_tasks();
const TaskSpec& task_by_name(const std::string& name);

struct CorruptResult {
    std::vector<int> tokens;
    std::vector<uint8_t> mask;  // true where replaced by MASK
};

// independent per-position absorbing corruption at mask ratio gamma
CorruptResult corrupt_sequence(const TokenSeq& seq, int vocab, double gamma, Rng& rng);

// one sample's token content handed to the corruption stage
struct SampleTokens {
    std::vector<int> image;
    std::vector<int> text;
    std::vector<int> brain;
    int question_len = 0;  // BQA spans within text; answer follows question
    int answer_len = 0;

    const std::vector<int>& of(Modality m) const {
        switch (m) {
            case Modality::Image: return image;
            case Modality::Text: return text;
            default: return brain;
        }
    }
};

struct CorruptedModality {
    std::vector<int> tokens;
    std::vector<uint8_t> mask;  // loss positions (true where corrupted)
    Role role = Role::Condition;
};

struct CorruptedSample {
    std::array<CorruptedModality, 3> mods;  // indexed by Modality
    double t = 0.0;

    CorruptedModality& of(Modality m) { return mods[static_cast<int>(m)]; }
    const CorruptedModality& of(Modality m) const { return mods[static_cast<int>(m)]; }
};

struct Vocabs {
    int image = 0;
    int text = 0;
    int brain = 0;
    int of(Modality m) const {
        switch (m) {
            case Modality::Image: return image;
            case Modality::Text: return text;
            default: return brain;
        }
    }
};

// applies the task's masking scheme at a shared timestep t: targets are
// corrupted with gamma_t (BQA corrupts only the answer span), conditions pass
// through clean, excluded modalities pass through and are flagged for
// attention masking.
CorruptedSample corrupt_for_task(const SampleTokens& sample, const Vocabs& vocabs,
                                 const TaskSpec& task, double t, Rng& rng);

// keep-mask over the concatenated token axis (image | text | brain): entry
// (i,j) is true iff both positions belong to non-excluded modalities
std::vector<uint8_t> build_attention_mask(const TaskSpec& task, int64_t len_image,
                                          int64_t len_text, int64_t len_brain);

}  // namespace tridiff

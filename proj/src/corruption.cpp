#include "tridiff/corruption.hpp"

#include "tridiff/schedule.hpp"

namespace tridiff {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::Image: return "image";
        case Modality::Text: return "text";
        default: return "brain";
    }
}

namespace {
TaskSpec make_task(std::string name, Role image, Role text, Role brain, bool qa = false) {
    TaskSpec t;
    t.name = std::move(name);
    t.roles[static_cast<int>(Modality::Image)] = image;
    t.roles[static_cast<int>(Modality::Text)] = text;
    t.roles[static_cast<int>(Modality::Brain)] = brain;
    t.qa_layout = qa;
    return t;
}
}  // namespace

const std::vector<TaskSpec>& all_tasks() {
    static const std::vector<TaskSpec> tasks = {
        make_task("I->B", Role::Condition, Role::Excluded, Role::Target),
        make_task("T->B", Role::Excluded, Role::Condition, Role::Target),
        make_task("I&T->B", Role::Condition, Role::Condition, Role::Target),
        make_task("B->I", Role::Target, Role::Excluded, Role::Condition),
        make_task("B->T", Role::Excluded, Role::Target, Role::Condition),
        make_task("B->I&T", Role::Target, Role::Target, Role::Condition),
        // text carries question (condition span) + answer (target span)
        make_task("BQA", Role::Excluded, Role::Target, Role::Condition, true),
    };
    return tasks;
}

const TaskSpec& task_by_name(const std::string& name) {
    for (const auto& t : all_tasks())
        if (t.name == name) return t;
    throw std::invalid_argument("unknown task '" + name +
                                "' (expected one of I->B, T->B, I&T->B, B->I, B->T, "
                                "B->I&T, BQA)");
}

CorruptResult corrupt_sequence(const TokenSeq& seq, int vocab, double gamma, Rng& rng) {
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw std::domain_error("corrupt_sequence: gamma=" + std::to_string(gamma) +
                                " outside [0,1]");
    const int mask = mask_id(vocab);
    CorruptResult out;
    out.tokens = seq.tokens;
    out.mask.assign(seq.tokens.size(), 0);
    for (size_t i = 0; i < out.tokens.size(); ++i) {
        if (out.tokens[i] == mask)
            throw std::invalid_argument("corrupt_sequence: input already contains MASK");
        if (rng.bernoulli(gamma)) {
            out.tokens[i] = mask;
            out.mask[i] = 1;
        }
    }
    return out;
}

CorruptedSample corrupt_for_task(const SampleTokens& sample, const Vocabs& vocabs,
                                 const TaskSpec& task, double t, Rng& rng) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::domain_error("corrupt_for_task: t outside [0,1]");
    const double gamma = mask_ratio(t);
    CorruptedSample out;
    out.t = t;
    for (Modality m : kModalityOrder) {
        const auto& toks = sample.of(m);
        if (toks.empty())
            throw std::invalid_argument(std::string("corrupt_for_task: sample has no ") +
                                        modality_name(m) + " tokens");
        auto& dst = out.of(m);
        dst.role = task.role(m);
        if (task.is_target(m)) {
            if (task.qa_layout && m == Modality::Text) {
                // question span stays clean condition; only the answer span is
                // corrupted
                const int q = sample.question_len, a = sample.answer_len;
                if (q < 0 || a <= 0 || q + a > static_cast<int>(toks.size()))
                    throw std::invalid_argument(
                        "corrupt_for_task: BQA spans do not fit the text sequence");
                dst.tokens = toks;
                dst.mask.assign(toks.size(), 0);
                const int mask = mask_id(vocabs.of(m));
                for (int i = q; i < q + a; ++i) {
                    if (rng.bernoulli(gamma)) {
                        dst.tokens[i] = mask;
                        dst.mask[i] = 1;
                    }
                }
            } else {
                TokenSeq seq{m, toks};
                auto res = corrupt_sequence(seq, vocabs.of(m), gamma, rng);
                dst.tokens = std::move(res.tokens);
                dst.mask = std::move(res.mask);
            }
        } else {
            // condition and excluded modalities pass through clean
            dst.tokens = toks;
            dst.mask.assign(toks.size(), 0);
        }
    }
    return out;
}

std::vector<uint8_t> build_attention_mask(const TaskSpec& task, int64_t len_image,
                                          int64_t len_text, int64_t len_brain) {
    const std::array<int64_t, 3> lens = {len_image, len_text, len_brain};
    for (int i = 0; i < kNumModalities; ++i) {
        if (!task.is_excluded(static_cast<Modality>(i)) && lens[i] <= 0)
            throw std::invalid_argument("build_attention_mask: active modality with "
                                        "nonpositive length");
    }
    const int64_t total = len_image + len_text + len_brain;
    std::vector<uint8_t> active(total, 0);
    int64_t off = 0;
    for (int i = 0; i < kNumModalities; ++i) {
        const uint8_t on = task.is_excluded(static_cast<Modality>(i)) ? 0 : 1;
        for (int64_t p = 0; p < lens[i]; ++p) active[off + p] = on;
        off += lens[i];
    }
    std::vector<uint8_t> keep(total * total);
    for (int64_t i = 0; i < total; ++i)
        for (int64_t j = 0; j < total; ++j) keep[i * total + j] = active[i] & active[j];
    return keep;
}

}  // namespace tridiff

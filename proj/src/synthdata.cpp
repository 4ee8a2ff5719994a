#include "tridiff/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tridiff/serialize.hpp"

namespace tridiff {

namespace {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// substream ids for the independent generator stages
enum : uint64_t {
    kStreamMixing = 1,
    kStreamSplits = 2,
    kStreamFeatures = 3,
    kStreamSampleBase = 1000,
};

uint64_t hash_tokens(uint64_t seed, const std::vector<int>& vals) {
    uint64_t h = seed;
    for (int v : vals) {
        h ^= static_cast<uint64_t>(v) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
        (void)splitmix64(h);
    }
    return h;
}

}  // namespace

void SynthConfig::validate() const {
    if (concepts < 2) throw ConfigError("synth config: need at least 2 concepts");
    if (samples < concepts) throw ConfigError("synth config: need samples >= concepts");
    if (n_voxel < concepts) throw ConfigError("synth config: n_voxel must be >= concepts");
    if (image_vocab < 2 || text_vocab < 2)
        throw ConfigError("synth config: vocabularies need at least 2 tokens");
    if (image_len < 1 || text_len < 1)
        throw ConfigError("synth config: sequence lengths must be positive");
    if (attr_slots < 1 || attr_values < 2)
        throw ConfigError("synth config: need at least 1 slot and 2 values");
    if (question_len < 1 || answer_len < 1 ||
        question_len + answer_len > text_len)
        throw ConfigError("synth config: question+answer spans must fit text_len");
    if (1 + attr_slots + attr_slots * attr_values > text_vocab)
        throw ConfigError("synth config: text vocabulary too small for " +
                          std::to_string(attr_slots) + " slots x " +
                          std::to_string(attr_values) + " values");
    if (!(noise_sigma >= 0.0) || !(token_noise >= 0.0 && token_noise <= 1.0))
        throw ConfigError("synth config: invalid noise levels");
    if (!(val_frac >= 0.0 && test_frac > 0.0 && val_frac + test_frac < 1.0))
        throw ConfigError("synth config: invalid split fractions");
    if (repeats < 1) throw ConfigError("synth config: repeats must be >= 1");
    if (embed_dim < 2) throw ConfigError("synth config: embed_dim must be >= 2");
    const int per_concept = samples / concepts;
    if (static_cast<int>(std::lround(test_frac * per_concept)) < 1)
        throw ConfigError("synth config: test split would miss some concepts");
}

uint64_t SynthConfig::hash() const {
    ByteWriter w;
    w.u32(static_cast<uint32_t>(concepts));
    w.u32(static_cast<uint32_t>(samples));
    w.u32(static_cast<uint32_t>(n_voxel));
    w.u32(static_cast<uint32_t>(image_vocab));
    w.u32(static_cast<uint32_t>(text_vocab));
    w.u32(static_cast<uint32_t>(image_len));
    w.u32(static_cast<uint32_t>(text_len));
    w.u32(static_cast<uint32_t>(question_len));
    w.u32(static_cast<uint32_t>(answer_len));
    w.u32(static_cast<uint32_t>(attr_slots));
    w.u32(static_cast<uint32_t>(attr_values));
    w.f64(noise_sigma);
    w.f64(token_noise);
    w.f64(val_frac);
    w.f64(test_frac);
    w.u32(static_cast<uint32_t>(repeats));
    w.u32(static_cast<uint32_t>(embed_dim));
    w.u64(seed);
    return fnv1a64(w.bytes().data(), w.bytes().size());
}

int pad_token() { return 0; }

int question_token(int slot) { return 1 + slot; }

int value_token(const SynthConfig& cfg, int slot, int value) {
    return 1 + cfg.attr_slots + slot * cfg.attr_values + value;
}

int attribute_value(const SynthConfig& cfg, int concept, int slot) {
    // per-slot permutation of concepts over the value alphabet
    return ((2 * slot + 1) * concept + slot) % cfg.attr_values;
}

namespace {

std::vector<int> image_template(const SynthConfig& cfg, int concept) {
    std::vector<int> attrs(cfg.attr_slots);
    for (int s = 0; s < cfg.attr_slots; ++s) attrs[s] = attribute_value(cfg, concept, s);
    std::vector<int> toks(cfg.image_len);
    for (int i = 0; i < cfg.image_len; ++i) {
        uint64_t h = hash_tokens(cfg.seed ^ 0x1111, attrs);
        h ^= static_cast<uint64_t>(i) * 0x9E3779B97F4A7C15ULL;
        toks[i] = static_cast<int>(splitmix64(h) % static_cast<uint64_t>(cfg.image_vocab));
    }
    return toks;
}

std::vector<int> text_template(const SynthConfig& cfg, int concept) {
    std::vector<int> toks(cfg.text_len, pad_token());
    for (int s = 0; s < cfg.attr_slots && s < cfg.text_len; ++s)
        toks[s] = value_token(cfg, s, attribute_value(cfg, concept, s));
    const int filler_base = 1 + cfg.attr_slots + cfg.attr_slots * cfg.attr_values;
    const int n_filler = cfg.text_vocab - filler_base;
    for (int i = cfg.attr_slots; i < cfg.text_len; ++i) {
        if (n_filler <= 0) break;  // stays PAD
        uint64_t h = cfg.seed ^ 0x2222;
        h ^= static_cast<uint64_t>(concept) * 0x9E3779B97F4A7C15ULL;
        h ^= static_cast<uint64_t>(i) * 0xBF58476D1CE4E5B9ULL;
        toks[i] = filler_base + static_cast<int>(splitmix64(h) % static_cast<uint64_t>(n_filler));
    }
    return toks;
}

void apply_token_noise(std::vector<int>& toks, int vocab, double p, Rng& rng) {
    for (auto& t : toks)
        if (rng.bernoulli(p)) t = static_cast<int>(rng.below(vocab));
}

std::vector<double> bag_embedding(const std::vector<int>& toks, int vocab,
                                  const std::vector<double>& m, int embed_dim) {
    std::vector<double> bag(vocab, 0.0);
    for (int t : toks) bag[t] += 1.0;
    std::vector<double> f(embed_dim, 0.0);
    for (int e = 0; e < embed_dim; ++e)
        for (int v = 0; v < vocab; ++v) f[e] += m[e * vocab + v] * bag[v];
    double s = 0.0;
    for (double x : f) s += x * x;
    const double inv = 1.0 / (std::sqrt(s) + 1e-12);
    for (double& x : f) x *= inv;
    return f;
}

}  // namespace

void make_qa(const SynthConfig& cfg, int concept, int slot, std::vector<int>& question,
             std::vector<int>& answer) {
    question.assign(cfg.question_len, pad_token());
    question[0] = question_token(slot);
    answer.assign(cfg.answer_len, pad_token());
    answer[0] = value_token(cfg, slot, attribute_value(cfg, concept, slot));
}

Dataset generate(const SynthConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.config = cfg;
    Rng master(cfg.seed);

    // fixed full-rank mixing matrix
    Rng mix_rng = master.substream(kStreamMixing);
    ds.mixing.resize(static_cast<size_t>(cfg.n_voxel) * cfg.concepts);
    for (auto& v : ds.mixing) v = mix_rng.normal();

    // semantic feature maps
    Rng feat_rng = master.substream(kStreamFeatures);
    std::vector<double> m_v(static_cast<size_t>(cfg.embed_dim) * cfg.image_vocab);
    std::vector<double> m_c(static_cast<size_t>(cfg.embed_dim) * cfg.text_vocab);
    for (auto& v : m_v) v = feat_rng.normal();
    for (auto& v : m_c) v = feat_rng.normal();

    // balanced concept assignment: concept i gets samples/concepts (+1 for the
    // first samples%concepts concepts)
    std::vector<int> concept_of(cfg.samples);
    {
        int idx = 0;
        const int base = cfg.samples / cfg.concepts;
        const int extra = cfg.samples % cfg.concepts;
        for (int c = 0; c < cfg.concepts; ++c) {
            const int count = base + (c < extra ? 1 : 0);
            for (int k = 0; k < count; ++k) concept_of[idx++] = c;
        }
    }

    ds.samples.resize(cfg.samples);
    for (int i = 0; i < cfg.samples; ++i) {
        Rng rng = master.substream(kStreamSampleBase + static_cast<uint64_t>(i));
        TriModalSample& s = ds.samples[i];
        s.concept_id = concept_of[i];

        s.brain.assign(cfg.n_voxel, 0.0);
        for (int v = 0; v < cfg.n_voxel; ++v) s.brain[v] = ds.mixing[v * cfg.concepts + s.concept_id];
        if (cfg.noise_sigma > 0.0) {
            for (int v = 0; v < cfg.n_voxel; ++v) {
                double eps = 0.0;
                for (int r = 0; r < cfg.repeats; ++r) eps += rng.normal();
                s.brain[v] += cfg.noise_sigma * eps / static_cast<double>(cfg.repeats);
            }
        }

        s.image_tokens = image_template(cfg, s.concept_id);
        s.text_tokens = text_template(cfg, s.concept_id);
        if (cfg.token_noise > 0.0) {
            apply_token_noise(s.image_tokens, cfg.image_vocab, cfg.token_noise, rng);
            apply_token_noise(s.text_tokens, cfg.text_vocab, cfg.token_noise, rng);
        }

        s.qa_slot = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.attr_slots)));
        s.qa_value = attribute_value(cfg, s.concept_id, s.qa_slot);
        make_qa(cfg, s.concept_id, s.qa_slot, s.question, s.answer);

        s.f_v = bag_embedding(s.image_tokens, cfg.image_vocab, m_v, cfg.embed_dim);
        s.f_c = bag_embedding(s.text_tokens, cfg.text_vocab, m_c, cfg.embed_dim);
    }

    // per-concept disjoint splits
    Rng split_rng = master.substream(kStreamSplits);
    for (int c = 0; c < cfg.concepts; ++c) {
        std::vector<int> members;
        for (int i = 0; i < cfg.samples; ++i)
            if (ds.samples[i].concept_id == c) members.push_back(i);
        split_rng.shuffle(members);
        const int n_test = static_cast<int>(std::lround(cfg.test_frac * members.size()));
        const int n_val = static_cast<int>(std::lround(cfg.val_frac * members.size()));
        for (size_t k = 0; k < members.size(); ++k) {
            if (static_cast<int>(k) < n_test)
                ds.test_idx.push_back(members[k]);
            else if (static_cast<int>(k) < n_test + n_val)
                ds.val_idx.push_back(members[k]);
            else
                ds.train_idx.push_back(members[k]);
        }
    }
    std::sort(ds.train_idx.begin(), ds.train_idx.end());
    std::sort(ds.val_idx.begin(), ds.val_idx.end());
    std::sort(ds.test_idx.begin(), ds.test_idx.end());
    return ds;
}

namespace {
constexpr char kDatasetMagic[4] = {'T', 'D', 'D', 'S'};
constexpr uint32_t kDatasetVersion = 1;
}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    ByteWriter w;
    const SynthConfig& c = ds.config;
    w.u64(c.hash());
    w.u64(c.seed);
    w.u32(static_cast<uint32_t>(c.concepts));
    w.u32(static_cast<uint32_t>(c.samples));
    w.u32(static_cast<uint32_t>(c.n_voxel));
    w.u32(static_cast<uint32_t>(c.image_vocab));
    w.u32(static_cast<uint32_t>(c.text_vocab));
    w.u32(static_cast<uint32_t>(c.image_len));
    w.u32(static_cast<uint32_t>(c.text_len));
    w.u32(static_cast<uint32_t>(c.question_len));
    w.u32(static_cast<uint32_t>(c.answer_len));
    w.u32(static_cast<uint32_t>(c.attr_slots));
    w.u32(static_cast<uint32_t>(c.attr_values));
    w.f64(c.noise_sigma);
    w.f64(c.token_noise);
    w.f64(c.val_frac);
    w.f64(c.test_frac);
    w.u32(static_cast<uint32_t>(c.repeats));
    w.u32(static_cast<uint32_t>(c.embed_dim));
    w.f64_span(ds.mixing);
    w.u64(ds.samples.size());
    for (const auto& s : ds.samples) {
        w.u32(static_cast<uint32_t>(s.concept_id));
        w.f64_span(s.brain);
        w.i32_span(s.image_tokens);
        w.i32_span(s.text_tokens);
        w.i32_span(s.question);
        w.i32_span(s.answer);
        w.u32(static_cast<uint32_t>(s.qa_slot));
        w.u32(static_cast<uint32_t>(s.qa_value));
        w.f64_span(s.f_v);
        w.f64_span(s.f_c);
    }
    w.i32_span(ds.train_idx);
    w.i32_span(ds.val_idx);
    w.i32_span(ds.test_idx);
    write_framed_file(path, kDatasetMagic, kDatasetVersion, w);
}

Dataset load_dataset(const std::string& path) {
    ByteReader r = read_framed_file(path, kDatasetMagic, kDatasetVersion);
    Dataset ds;
    SynthConfig& c = ds.config;
    const uint64_t stored_hash = r.u64();
    c.seed = r.u64();
    c.concepts = static_cast<int>(r.u32());
    c.samples = static_cast<int>(r.u32());
    c.n_voxel = static_cast<int>(r.u32());
    c.image_vocab = static_cast<int>(r.u32());
    c.text_vocab = static_cast<int>(r.u32());
    c.image_len = static_cast<int>(r.u32());
    c.text_len = static_cast<int>(r.u32());
    c.question_len = static_cast<int>(r.u32());
    c.answer_len = static_cast<int>(r.u32());
    c.attr_slots = static_cast<int>(r.u32());
    c.attr_values = static_cast<int>(r.u32());
    c.noise_sigma = r.f64();
    c.token_noise = r.f64();
    c.val_frac = r.f64();
    c.test_frac = r.f64();
    c.repeats = static_cast<int>(r.u32());
    c.embed_dim = static_cast<int>(r.u32());
    if (c.hash() != stored_hash)
        throw IoError("dataset '" + path + "': stored config hash does not match header fields");
    ds.mixing = r.f64_span();
    const uint64_t n = r.u64();
    ds.samples.resize(n);
    for (auto& s : ds.samples) {
        s.concept_id = static_cast<int>(r.u32());
        s.brain = r.f64_span();
        s.image_tokens = r.i32_span();
        s.text_tokens = r.i32_span();
        s.question = r.i32_span();
        s.answer = r.i32_span();
        s.qa_slot = static_cast<int>(r.u32());
        s.qa_value = static_cast<int>(r.u32());
        s.f_v = r.f64_span();
        s.f_c = r.f64_span();
    }
    ds.train_idx = r.i32_span();
    ds.val_idx = r.i32_span();
    ds.test_idx = r.i32_span();
    if (r.remaining() != 0) throw IoError("dataset '" + path + "': trailing bytes");
    return ds;
}

}  // namespace tridiff

#include "lmde/backbone.hpp"

#include "lmde/errors.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>

namespace lmde {

BackboneConfig BackboneConfig::full_scale() {
    BackboneConfig c;
    c.vision_width = 768;
    c.text_width = 768;
    c.vocab_size = 30522;
    c.vision_layers = 12;
    c.text_layers = 12;
    c.heads = 12;
    c.patch_size = 16;
    c.image_size = 224;
    c.max_prompt_tokens = 64;
    c.dropout = 0.1;
    return c;
}

void BackboneConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("backbone config: " + m); };
    if (vision_width <= 0 || text_width <= 0 || vocab_size <= 0) fail("widths and vocabulary must be positive");
    if (vision_layers < 0 || text_layers < 0) fail("layer counts must be non-negative");
    if (heads <= 0 || vision_width % heads != 0 || text_width % heads != 0) fail("widths must divide into heads");
    if (patch_size <= 0 || image_size % patch_size != 0) fail("image size must be a multiple of the patch size");
    if (image_size < 2 * patch_size) fail("image size must be at least two patches");
    if (max_prompt_tokens < 0 || mlp_ratio <= 0) fail("max_prompt_tokens and mlp_ratio out of range");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

namespace {

Matrix ones_row(int n) { return Matrix::Ones(1, n); }
Matrix zeros_row(int n) { return Matrix::Zero(1, n); }

ad::Var add_linear(ParamStore& store, const std::string& name, int out, int in, std::mt19937_64& rng, ad::Var* bias) {
    ad::Var w = store.add(name + ".w", init_gaussian(out, in, 1.0 / std::sqrt(static_cast<double>(in)), rng), false);
    *bias = store.add(name + ".b", zeros_row(out), false);
    return w;
}

}  // namespace

BlockWeights make_block(ParamStore& store, const std::string& prefix, int width, int mlp_ratio,
                        std::mt19937_64& rng) {
    BlockWeights b;
    b.ln1_g = store.add(prefix + ".ln1.g", ones_row(width), false);
    b.ln1_b = store.add(prefix + ".ln1.b", zeros_row(width), false);
    b.attn.wq = add_linear(store, prefix + ".attn.q", width, width, rng, &b.attn.bq);
    b.attn.wk = add_linear(store, prefix + ".attn.k", width, width, rng, &b.attn.bk);
    b.attn.wv = add_linear(store, prefix + ".attn.v", width, width, rng, &b.attn.bv);
    b.attn.wo = add_linear(store, prefix + ".attn.o", width, width, rng, &b.attn.bo);
    b.ln2_g = store.add(prefix + ".ln2.g", ones_row(width), false);
    b.ln2_b = store.add(prefix + ".ln2.b", zeros_row(width), false);
    b.fc1_w = add_linear(store, prefix + ".mlp.fc1", width * mlp_ratio, width, rng, &b.fc1_b);
    b.fc2_w = add_linear(store, prefix + ".mlp.fc2", width, width * mlp_ratio, rng, &b.fc2_b);
    return b;
}

ad::Var self_attention(const ad::Var& x, const AttentionWeights& w, int heads, double dropout, ForwardContext& ctx) {
    const Index width = x.cols();
    const Index dh = width / heads;
    const ad::Var q = ad::linear(x, adapted_weight(w.wq, w.lora_q ? &*w.lora_q : nullptr), w.bq);
    const ad::Var k = ad::linear(x, w.wk, w.bk);
    const ad::Var v = ad::linear(x, adapted_weight(w.wv, w.lora_v ? &*w.lora_v : nullptr), w.bv);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<ad::Var> per_head;
    per_head.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const ad::Var qh = ad::slice_cols(q, h * dh, dh);
        const ad::Var kh = ad::slice_cols(k, h * dh, dh);
        const ad::Var vh = ad::slice_cols(v, h * dh, dh);
        ad::Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt));
        if (ctx.dropout_active()) attn = ad::dropout(attn, dropout, *ctx.rng);
        per_head.push_back(ad::matmul(attn, vh));
    }
    return ad::linear(ad::concat_cols(per_head), w.wo, w.bo);
}

ad::Var transformer_block(const ad::Var& x, const BlockWeights& w, int heads, double dropout, ForwardContext& ctx) {
    ad::Var a = self_attention(ad::layer_norm_rows(x, w.ln1_g, w.ln1_b), w.attn, heads, dropout, ctx);
    if (ctx.dropout_active()) a = ad::dropout(a, dropout, *ctx.rng);
    const ad::Var mid = ad::add(x, a);
    ad::Var m = ad::linear(ad::gelu(ad::linear(ad::layer_norm_rows(mid, w.ln2_g, w.ln2_b), w.fc1_w, w.fc1_b)),
                           w.fc2_w, w.fc2_b);
    if (ctx.dropout_active()) m = ad::dropout(m, dropout, *ctx.rng);
    return ad::add(mid, m);
}

VisionEncoder::VisionEncoder(const BackboneConfig& cfg, ParamStore& store, std::mt19937_64& rng) : cfg_(cfg) {
    patch_w_ = add_linear(store, "vit.patch", cfg.vision_width, cfg.patch_dim(), rng, &patch_b_);
    pos_ = store.add("vit.pos", init_gaussian(cfg.num_patches(), cfg.vision_width, 0.02, rng), false);
    for (int l = 0; l < cfg.vision_layers; ++l) {
        blocks_.push_back(make_block(store, "vit.layer" + std::to_string(l), cfg.vision_width, cfg.mlp_ratio, rng));
    }
    lnf_g_ = store.add("vit.ln_f.g", ones_row(cfg.vision_width), false);
    lnf_b_ = store.add("vit.ln_f.b", zeros_row(cfg.vision_width), false);
}

ad::Var VisionEncoder::forward(const ad::Var& patches, ForwardContext& ctx) const {
    if (patches.rows() != pos_.rows()) {
        throw ShapeError("encode_image: expected " + std::to_string(pos_.rows()) + " patches, got " +
                         std::to_string(patches.rows()));
    }
    if (patches.cols() != cfg_.patch_dim()) throw ShapeError("encode_image: patch width mismatch");
    ad::Var x = ad::add(ad::linear(patches, patch_w_, patch_b_), pos_);
    if (ctx.dropout_active()) x = ad::dropout(x, cfg_.dropout, *ctx.rng);
    for (const auto& b : blocks_) x = transformer_block(x, b, cfg_.heads, cfg_.dropout, ctx);
    return ad::layer_norm_rows(x, lnf_g_, lnf_b_);
}

Matrix VisionEncoder::encode(const Matrix& patches) const {
    ForwardContext ctx;
    return forward(ad::constant(patches), ctx).value();
}

WordEmbedding::WordEmbedding(const BackboneConfig& cfg, ParamStore& store, std::mt19937_64& rng) {
    table_ = store.add("llm.embed", init_gaussian(cfg.vocab_size, cfg.text_width, 1.0, rng), false);
}

ad::Var WordEmbedding::embed(const std::vector<int>& ids) const {
    const Index v = table_.rows();
    Matrix out(static_cast<Index>(ids.size()), table_.cols());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0 || ids[t] >= v) {
            throw VocabError("token id " + std::to_string(ids[t]) + " outside vocabulary of " + std::to_string(v));
        }
        out.row(static_cast<Index>(t)) = table_.value().row(ids[t]);
    }
    return ad::make_op({table_}, std::move(out), [ids](const Matrix& g, const std::vector<Matrix*>& t) {
        if (!t[0]) return;
        for (std::size_t i = 0; i < ids.size(); ++i) t[0]->row(ids[i]) += g.row(static_cast<Index>(i));
    });
}

TextEncoder::TextEncoder(const BackboneConfig& cfg, ParamStore& store, std::mt19937_64& rng) : cfg_(cfg) {
    pos_ = store.add("llm.pos", init_gaussian(cfg.max_sequence(), cfg.text_width, 0.02, rng), false);
    for (int l = 0; l < cfg.text_layers; ++l) {
        blocks_.push_back(make_block(store, "llm.layer" + std::to_string(l), cfg.text_width, cfg.mlp_ratio, rng));
    }
}

ad::Var TextEncoder::forward(const ad::Var& seq, ForwardContext& ctx) const {
    const Index t = seq.rows();
    if (t < 1 || t > pos_.rows()) {
        throw ShapeError("encode_sequence: length " + std::to_string(t) + " outside [1, " +
                         std::to_string(pos_.rows()) + "]");
    }
    if (seq.cols() != cfg_.text_width) throw ShapeError("encode_sequence: width mismatch");
    if (!seq.value().allFinite()) throw NumericError("encode_sequence: non-finite input");
    ad::Var x = ad::add(seq, ad::slice_rows(pos_, 0, t));
    if (ctx.dropout_active()) x = ad::dropout(x, cfg_.dropout, *ctx.rng);
    for (const auto& b : blocks_) x = transformer_block(x, b, cfg_.heads, cfg_.dropout, ctx);
    return x;
}

Matrix TextEncoder::encode(const Matrix& seq) const {
    ForwardContext ctx;
    return forward(ad::constant(seq), ctx).value();
}

Backbones init_backbones(const BackboneConfig& cfg, std::uint64_t seed, ParamStore& store) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    Backbones b;
    b.vision = VisionEncoder(cfg, store, rng);
    b.words = WordEmbedding(cfg, store, rng);
    b.text = TextEncoder(cfg, store, rng);
    return b;
}

void attach_block_adapters(std::vector<BlockWeights>& blocks, ParamStore& store, const std::string& prefix,
                           int rank, double alpha, std::mt19937_64& rng) {
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        auto& attn = blocks[l].attn;
        const std::string base = prefix + ".layer" + std::to_string(l) + ".attn.";
        attn.lora_q = attach_adapter(store, base + "q", attn.wq.rows(), attn.wq.cols(), rank, alpha, rng);
        attn.lora_v = attach_adapter(store, base + "v", attn.wv.rows(), attn.wv.cols(), rank, alpha, rng);
    }
}

void merge_block_adapters(std::vector<BlockWeights>& blocks) {
    for (auto& b : blocks) {
        if (b.attn.lora_q && !b.attn.lora_q->merged) merge_attached(b.attn.wq, *b.attn.lora_q);
        if (b.attn.lora_v && !b.attn.lora_v->merged) merge_attached(b.attn.wv, *b.attn.lora_v);
    }
}

// ---- weight file ----------------------------------------------------------

namespace {

constexpr std::array<char, 5> kMagic{'L', 'M', 'D', 'E', '1'};

std::array<std::int32_t, 9> header_fields(const BackboneConfig& c) {
    return {c.vision_width, c.text_width, c.vocab_size, c.vision_layers, c.text_layers,
            c.heads,        c.patch_size, c.image_size, c.max_prompt_tokens};
}

constexpr std::array<const char*, 9> kFieldNames{"d_m",   "D",          "V",          "vision_layers",    "text_layers",
                                                 "heads", "patch_size", "image_size", "max_prompt_tokens"};

void put_u32(std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw WeightLoadError("weight file truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_weights(const std::filesystem::path& path, const BackboneConfig& cfg, const ParamStore& store) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write weight file: " + path.string());
    os.write(kMagic.data(), kMagic.size());
    for (std::int32_t f : header_fields(cfg)) put_u32(os, static_cast<std::uint32_t>(f));
    put_u32(os, static_cast<std::uint32_t>(store.entries().size()));
    for (const auto& [name, e] : store.entries()) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Matrix& m = e.var.value();
        put_u32(os, 2);
        put_u32(os, static_cast<std::uint32_t>(m.rows()));
        put_u32(os, static_cast<std::uint32_t>(m.cols()));
        for (Index i = 0; i < m.size(); ++i) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
    }
    if (!os) throw IoError("failed writing weight file: " + path.string());
}

void load_weights(const std::filesystem::path& path, const BackboneConfig& cfg, ParamStore& store) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw WeightLoadError("cannot open weight file: " + path.string());
    std::array<char, 5> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw WeightLoadError("bad weight file magic");
    const auto expected = header_fields(cfg);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto got = static_cast<std::int32_t>(get_u32(is));
        if (got != expected[i]) {
            throw WeightLoadError(std::string("weight file ") + kFieldNames[i] + "=" + std::to_string(got) +
                                  " does not match config value " + std::to_string(expected[i]));
        }
    }
    const std::uint32_t count = get_u32(is);
    // Staged so a failing file leaves the store untouched.
    std::vector<std::pair<ad::Var, Matrix>> staged;
    for (std::uint32_t n = 0; n < count; ++n) {
        const std::uint32_t len = get_u32(is);
        if (len > 4096) throw WeightLoadError("implausible tensor name length");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw WeightLoadError("weight file truncated");
        if (!store.contains(name)) throw WeightLoadError("unknown tensor in weight file: " + name);
        const std::uint32_t rank = get_u32(is);
        std::vector<std::uint32_t> dims(rank);
        for (auto& d : dims) d = get_u32(is);
        ad::Var v = store.get(name);
        const bool shape_ok = (rank == 2 && dims[0] == v.rows() && dims[1] == v.cols()) ||
                              (rank == 1 && v.rows() == 1 && dims[0] == v.cols());
        if (!shape_ok) throw WeightLoadError("shape mismatch for tensor " + name);
        Matrix m(v.rows(), v.cols());
        for (Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<float>(get_u32(is));
        staged.emplace_back(std::move(v), std::move(m));
    }
    for (auto& [v, m] : staged) v.mutable_value() = std::move(m);
}

}  // namespace lmde

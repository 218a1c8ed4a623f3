#include <cmath>

#include "doctest.h"
#include "reference_encoder.hpp"
#include "skillnet/errors.hpp"
#include "skillnet/model.hpp"
#include "skillnet/optim.hpp"
#include "testutil.hpp"

using namespace skillnet;
using testutil::bitwise_equal;
using testutil::random_tensor;

namespace {

ModelConfig encoder_only_config(int layers = 2, int hidden = 8, int heads = 2, int ffn = 16) {
  ModelConfig cfg;
  cfg.layers = layers;
  cfg.hidden = hidden;
  cfg.heads = heads;
  cfg.ffn = ffn;
  cfg.modalities = {};  // no embedders, encoder drives hand-built sequences
  cfg.n_classes = 0;
  cfg.asr_symbols = "";
  cfg.clusters = 0;
  return cfg;
}

EmbeddedSequence make_seq(const Tensor& tokens, Skill modality, bool with_cls = true) {
  EmbeddedSequence seq;
  seq.tokens = tokens;
  seq.pad.assign((size_t)(tokens.dim(0)), 0);
  seq.modality = modality;
  if (with_cls) seq.cls_index = 0;
  seq.raw_len = tokens.dim(0);
  return seq;
}

void copy_values(Model& model, const std::string& name, const std::vector<double>& values) {
  model.param(name).mutable_values() = values;
}

// Copies one skill's projections plus all shared weights from a dense model
// into a skillnet model slot.
void mirror_dense_into_skill(const Model& dense, Model& sparse, Skill skill) {
  for (const auto& p : dense.parameters()) {
    std::string name = p.name;
    const std::string shared_tag = ".attn.shared.";
    auto at = name.find(shared_tag);
    if (at != std::string::npos) {
      name = name.substr(0, at) + ".attn." + skill_name(skill) + "." +
             name.substr(at + shared_tag.size());
    }
    if (sparse.has_param(name)) copy_values(sparse, name, p.tensor.values());
  }
}

void randomize_params(Model& model, const std::vector<const Model::ParamEntry*>& entries,
                      Rng& rng) {
  (void)model;
  for (const auto* e : entries) {
    for (auto& v : e->tensor.mutable_values()) v = rng.normal();
  }
}

}  // namespace

TEST_CASE("skill projection with identity weights reproduces the input") {
  ModelConfig cfg = encoder_only_config(1, 4, 1, 8);  // one head, d_k = d
  Model model(cfg, 3);
  copy_values(model, "encoder.l0.attn.text.q.w", Tensor::identity(4).values());
  copy_values(model, "encoder.l0.attn.text.q.b", {0, 0, 0, 0});
  Rng rng(5);
  Tensor x = random_tensor({3, 4}, rng, false);
  Tensor q = model.skill_project(x, 0, 0, 'Q', Skill::text);
  CHECK(bitwise_equal(q.values(), x.values()));
}

TEST_CASE("projection output depends only on the activated skill") {
  ModelConfig cfg = encoder_only_config();
  Model model(cfg, 11);
  // Make every skill's projections identical.
  for (Skill s : cfg.skills) {
    for (const char* role : {"q", "k", "v"}) {
      for (const char* part : {"w", "b"}) {
        const std::string src = std::string("encoder.l0.attn.text.") + role + "." + part;
        const std::string dst =
            std::string("encoder.l0.attn.") + skill_name(s) + "." + role + "." + part;
        copy_values(model, dst, model.param(src).values());
      }
    }
  }
  Rng rng(7);
  Tensor x = random_tensor({3, 8}, rng, false);
  Tensor a = model.skill_project(x, 0, 1, 'K', Skill::text);
  Tensor b = model.skill_project(x, 0, 1, 'K', Skill::video);
  CHECK(bitwise_equal(a.values(), b.values()));

  // activating a skill outside the config is a configuration error
  ModelConfig c2 = encoder_only_config();
  c2.skills = {Skill::text, Skill::image};
  Model m2(c2, 1);
  Tensor y = random_tensor({2, 8}, rng, false);
  CHECK_THROWS_AS((void)m2.skill_project(y, 0, 0, 'Q', Skill::code), ConfigError);
}

TEST_CASE("perturbing a deactivated skill leaves the forward pass bit-identical") {
  ModelConfig cfg = encoder_only_config();
  Model model(cfg, 17);
  Rng rng(23);
  Tensor x = random_tensor({5, 8}, rng, false);
  auto seq = make_seq(x, Skill::text);
  auto before = model.encode(seq, Skill::text).states.values();

  Rng noise(99);
  for (Skill s : {Skill::image, Skill::sound, Skill::video, Skill::code}) {
    randomize_params(model, model.skill_params(s), noise);
  }
  auto after = model.encode(seq, Skill::text).states.values();
  CHECK(bitwise_equal(before, after));
}

TEST_CASE("degenerate attention weights average the value rows") {
  ModelConfig cfg = encoder_only_config(1, 4, 1, 8);
  Model model(cfg, 29);
  const int d = 4;
  copy_values(model, "encoder.l0.attn.text.q.w", Tensor::zeros({d, d}).values());
  copy_values(model, "encoder.l0.attn.text.k.w", Tensor::zeros({d, d}).values());
  copy_values(model, "encoder.l0.attn.text.v.w", Tensor::identity(d).values());
  copy_values(model, "encoder.l0.attn.out.w", Tensor::identity(d).values());
  for (const char* b : {"q", "k", "v"}) {
    copy_values(model, std::string("encoder.l0.attn.text.") + b + ".b", {0, 0, 0, 0});
  }
  copy_values(model, "encoder.l0.attn.out.b", {0, 0, 0, 0});

  Rng rng(31);
  Tensor x = random_tensor({3, d}, rng, false);
  Tensor out = model.multi_head_attention(x, 0, Skill::text);
  for (int j = 0; j < d; ++j) {
    double mean = (x.at({0, j}) + x.at({1, j}) + x.at({2, j})) / 3.0;
    for (int i = 0; i < 3; ++i) {
      CHECK(out.at({i, j}) == doctest::Approx(mean).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention rows sum to one over unmasked positions") {
  ModelConfig cfg = encoder_only_config(1, 8, 2, 16);
  Model model(cfg, 37);
  Rng rng(41);
  Tensor x = random_tensor({6, 8}, rng, false);
  std::vector<uint8_t> pad = {0, 0, 0, 0, 1, 1};
  std::vector<Mat> trace;
  (void)model.multi_head_attention(x, 0, Skill::text, &pad, &trace);
  REQUIRE(trace.size() == 2);
  for (const auto& m : trace) {
    for (int i = 0; i < m.rows; ++i) {
      double total = 0.0, masked = 0.0;
      for (int j = 0; j < m.cols; ++j) {
        total += m.at(i, j);
        if (pad[size_t(j)]) masked += m.at(i, j);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(masked <= 1e-12);  // padded keys carry no weight
    }
  }
}

TEST_CASE("single-head attention matches an explicit loop oracle") {
  ModelConfig cfg = encoder_only_config(1, 4, 1, 8);
  Model model(cfg, 43);
  Rng rng(47);
  Tensor x = random_tensor({3, 4}, rng, false);
  Tensor out = model.multi_head_attention(x, 0, Skill::text);

  auto wq = model.param("encoder.l0.attn.text.q.w").values();
  auto wk = model.param("encoder.l0.attn.text.k.w").values();
  auto wv = model.param("encoder.l0.attn.text.v.w").values();
  auto wo = model.param("encoder.l0.attn.out.w").values();
  auto bo = model.param("encoder.l0.attn.out.b").values();
  const int n = 3, d = 4;
  auto project = [&](const std::vector<double>& w, int i, int j) {
    double s = 0;
    for (int k = 0; k < d; ++k) s += x.at({i, k}) * w[size_t(k) * d + j];
    return s;  // biases are zero at init
  };
  Mat q(n, d), k(n, d), v(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      q.at(i, j) = project(wq, i, j);
      k.at(i, j) = project(wk, i, j);
      v.at(i, j) = project(wv, i, j);
    }
  }
  for (int i = 0; i < n; ++i) {
    std::vector<double> score((size_t)(n));
    double mx = -1e300;
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int a = 0; a < d; ++a) s += q.at(i, a) * k.at(j, a);
      score[size_t(j)] = s / 2.0;  // sqrt(d_k) = 2
      mx = std::max(mx, score[size_t(j)]);
    }
    double z = 0;
    for (auto& s : score) {
      s = std::exp(s - mx);
      z += s;
    }
    for (auto& s : score) s /= z;
    for (int j = 0; j < d; ++j) {
      double val = bo[size_t(j)];
      for (int a = 0; a < d; ++a) {
        double ctx = 0;
        for (int t = 0; t < n; ++t) ctx += score[size_t(t)] * v.at(t, a);
        val += ctx * wo[size_t(a) * d + j];
      }
      CHECK(out.at({i, j}) == doctest::Approx(val).epsilon(1e-12));
    }
  }
}

TEST_CASE("dense variant is bitwise equal to skillnet with one activated skill") {
  ModelConfig dense_cfg = encoder_only_config();
  dense_cfg.variant = Variant::dense;
  dense_cfg.skills = {Skill::text};
  ModelConfig sparse_cfg = encoder_only_config();

  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    Model dense(dense_cfg, seed);
    Model sparse(sparse_cfg, seed + 1000);
    mirror_dense_into_skill(dense, sparse, Skill::text);

    Rng rng(seed * 31 + 7);
    Tensor x = random_tensor({4, 8}, rng, false);
    auto enc_d = dense.encode(make_seq(x, Skill::text), Skill::text);
    auto enc_s = sparse.encode(make_seq(x, Skill::text), Skill::text);
    CHECK(bitwise_equal(enc_d.states.values(), enc_s.states.values()));
    CHECK(enc_s.states.dims() == std::vector<int>{4, 8});

    dense.zero_grads();
    sparse.zero_grads();
    backward(sum(enc_d.states));
    backward(sum(enc_s.states));
    CHECK(bitwise_equal(dense.param("encoder.l0.attn.shared.q.w").grad(),
                        sparse.param("encoder.l0.attn.text.q.w").grad()));
    CHECK(bitwise_equal(dense.param("encoder.l1.ffn.w1").grad(),
                        sparse.param("encoder.l1.ffn.w1").grad()));
  }
}

TEST_CASE("two-layer encoder matches the from-scratch reference within 1e-10") {
  ModelConfig cfg = encoder_only_config(2, 8, 2, 16);
  Model model(cfg, 53);
  Rng rng(59);
  Tensor x = random_tensor({5, 8}, rng, false);
  auto enc = model.encode(make_seq(x, Skill::text), Skill::text);

  Mat input = refenc::to_mat(x);
  Mat ref = refenc::reference_encode(model, input, "text");
  REQUIRE(enc.states.size() == int64_t(ref.v.size()));
  for (size_t i = 0; i < ref.v.size(); ++i) {
    CHECK(enc.states.values()[i] == doctest::Approx(ref.v[i]).epsilon(1e-10));
  }
  // pooled vector is the first-token state
  for (int j = 0; j < 8; ++j) {
    CHECK(enc.pooled->at({0, j}) == enc.states.at({0, j}));
  }
}

TEST_CASE("moe: one-hot gate reduces to the selected expert") {
  ModelConfig cfg = encoder_only_config(1, 8, 2, 16);
  cfg.variant = Variant::moe;
  Model model(cfg, 61);
  // Force all gate mass onto expert 3 (positive inputs keep the forced
  // column's logit dominant).
  auto& gate = model.layers()[0].gate.mutable_values();
  for (size_t i = 0; i < gate.size(); ++i) {
    gate[i] = (i % 5 == 3) ? 50.0 : 0.0;
  }
  Rng rng(67);
  Tensor x = random_tensor({4, 8}, rng, false);
  for (auto& v : x.mutable_values()) v = 0.1 + std::fabs(v);
  Mat gate_trace;
  Tensor out = model.moe_ffn(x, 0, &gate_trace);

  const auto& e = model.layers()[0].experts[3];
  Tensor expect = add_rowvec(matmul(gelu(add_rowvec(matmul(x, e.w1), e.b1)), e.w2), e.b2);
  for (size_t i = 0; i < expect.values().size(); ++i) {
    CHECK(out.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-12));
  }
  for (int i = 0; i < gate_trace.rows; ++i) {
    double s = 0;
    for (int j = 0; j < gate_trace.cols; ++j) s += gate_trace.at(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("moe matches a dense weighted-sum oracle restricted to the top-2 set") {
  ModelConfig cfg = encoder_only_config(1, 8, 2, 16);
  cfg.variant = Variant::moe;
  Model model(cfg, 71);
  Rng rng(73);
  Tensor x = random_tensor({5, 8}, rng, false);
  Mat gate_trace;
  Tensor out = model.moe_ffn(x, 0, &gate_trace);

  std::vector<Tensor> expert_out;
  for (const auto& e : model.layers()[0].experts) {
    expert_out.push_back(add_rowvec(matmul(gelu(add_rowvec(matmul(x, e.w1), e.b1)), e.w2), e.b2));
  }
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 8; ++j) {
      double mix = 0;
      for (int e = 0; e < 5; ++e) mix += gate_trace.at(i, e) * expert_out[size_t(e)].at({i, j});
      CHECK(out.at({i, j}) == doctest::Approx(mix).epsilon(1e-10));
    }
  }
  for (int i = 0; i < gate_trace.rows; ++i) {
    int nonzero = 0;
    for (int e = 0; e < 5; ++e) {
      if (gate_trace.at(i, e) > 0.0) ++nonzero;
    }
    CHECK(nonzero == 2);
  }
}

TEST_CASE("moe top-k above expert count is a configuration error") {
  ModelConfig cfg = encoder_only_config();
  cfg.variant = Variant::moe;
  cfg.moe_top_k = 6;
  CHECK_THROWS_AS(Model(cfg, 1), ConfigError);
}

TEST_CASE("gradient touch reports exactly the activated skill") {
  ModelConfig cfg = encoder_only_config();
  Model model(cfg, 79);
  Rng rng(83);
  Tensor x = random_tensor({4, 8}, rng, false);

  model.zero_grads();
  backward(sum(model.encode(make_seq(x, Skill::sound), Skill::sound).states));
  auto touch = model.gradient_touch();
  for (Skill s : cfg.skills) {
    CHECK(touch[s] == (s == Skill::sound));
  }

  // round-robin over all five activations touches every skill
  model.zero_grads();
  for (Skill s : cfg.skills) {
    backward(sum(model.encode(make_seq(x, s), s).states));
  }
  touch = model.gradient_touch();
  for (Skill s : cfg.skills) CHECK(touch[s]);
}

TEST_CASE("deactivated skills get zero grads and stay bitwise fixed through the optimizer") {
  ModelConfig cfg = encoder_only_config();
  Model model(cfg, 89);
  AdamW opt(model.trainable_params());
  Rng rng(97);
  Tensor x = random_tensor({4, 8}, rng, false);

  std::map<std::string, std::vector<double>> before;
  for (Skill s : {Skill::image, Skill::sound, Skill::video, Skill::code}) {
    for (const auto* e : model.skill_params(s)) before[e->name] = e->tensor.values();
  }

  model.zero_grads();
  backward(sum(model.encode(make_seq(x, Skill::text), Skill::text).states));
  for (Skill s : {Skill::image, Skill::sound, Skill::video, Skill::code}) {
    for (const auto* e : model.skill_params(s)) {
      CHECK_FALSE(e->tensor.grad_ready());
      for (double g : e->tensor.grad()) CHECK(g == 0.0);
    }
  }
  opt.step(1e-3);
  for (Skill s : {Skill::image, Skill::sound, Skill::video, Skill::code}) {
    for (const auto* e : model.skill_params(s)) {
      CHECK(bitwise_equal(e->tensor.values(), before[e->name]));
    }
  }
  bool text_moved = false;
  for (const auto* e : model.skill_params(Skill::text)) {
    if (e->tensor.grad_ready()) text_moved = true;
  }
  CHECK(text_moved);
}

TEST_CASE("attention stack is permutation-equivariant without positions") {
  ModelConfig cfg = encoder_only_config(2, 8, 2, 16);
  Model model(cfg, 101);
  Rng rng(103);
  const int n = 6;
  Tensor x = random_tensor({n, 8}, rng, false);
  std::vector<uint8_t> pad = {0, 0, 0, 0, 1, 0};

  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  std::vector<double> px((size_t)(n) * 8);
  std::vector<uint8_t> ppad((size_t)(n));
  for (int i = 0; i < n; ++i) {
    ppad[size_t(i)] = pad[size_t(perm[size_t(i)])];
    for (int j = 0; j < 8; ++j) {
      px[size_t(i) * 8 + j] = x.values()[size_t(perm[size_t(i)]) * 8 + j];
    }
  }
  auto seq = make_seq(x, Skill::text, false);
  seq.pad = pad;
  auto pseq = make_seq(Tensor::from_values({n, 8}, px), Skill::text, false);
  pseq.pad = ppad;

  auto out = model.encode(seq, Skill::text).states;
  auto pout = model.encode(pseq, Skill::text).states;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 8; ++j) {
      CHECK(pout.at({i, j}) == doctest::Approx(out.at({perm[size_t(i)], j})).epsilon(1e-9));
    }
  }
}

TEST_CASE("full-model gradient check against finite differences") {
  ModelConfig cfg = encoder_only_config(2, 8, 2, 16);
  Model model(cfg, 107);
  Rng rng(109);
  Tensor x = random_tensor({3, 8}, rng, false);

  std::vector<Tensor> leaves = {
      model.param("encoder.l0.attn.text.q.w"), model.param("encoder.l0.attn.text.v.b"),
      model.param("encoder.l1.ffn.w2"), model.param("encoder.l0.ln1.g"),
      model.param("encoder.l1.attn.out.w")};
  auto rep = testutil::gradient_check(
      [&] {
        auto enc = model.encode(make_seq(x, Skill::text), Skill::text);
        return sum(mul(enc.states, enc.states));
      },
      leaves, 1e-5);
  CHECK(rep.max_rel_err <= 1e-3);
}

TEST_CASE("encode rejects mismatched activation and zero-length input") {
  ModelConfig cfg = encoder_only_config();
  Model model(cfg, 113);
  Rng rng(127);
  Tensor x = random_tensor({3, 8}, rng, false);
  CHECK_THROWS_AS(model.encode(make_seq(x, Skill::image), Skill::text), ConfigError);
  EmbeddedSequence empty;
  empty.modality = Skill::text;
  CHECK_THROWS_AS(model.encode(empty, Skill::text), ContractError);
}

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "repq/errors.hpp"
#include "repq/model.hpp"

using namespace repq;

namespace {

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

SignalMatrix random_signal(std::size_t len, std::mt19937_64& rng) {
  SignalMatrix s = SignalMatrix::zeros(len);
  for (auto& ch : s.ch)
    for (double& v : ch) v = 2.0 * u01(rng) - 1.0;
  return s;
}

// Small configuration used throughout: window 6, step 4, padded length 18
// -> 4 windows; one conv layer; 8-dimensional embeddings with 2 heads.
ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.window = 6;
  cfg.step = 4;
  cfg.max_len = 18;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.lstm_layers = 1;
  cfg.dropout = 0.0;
  cfg.conv = {{4, 3}};
  cfg.mlp_hidden = 8;
  cfg.num_classes = 3;
  return cfg;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("repq_model_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("window count arithmetic") {
  ModelConfig cfg;  // defaults: window 50, step 15, max_len 500
  CHECK(cfg.n_windows() == 31);
  CHECK(cfg.conv_flat_dim() == 12 * 64);  // 50 -> 25 -> 12 through two pools
  CHECK(tiny_config().n_windows() == 4);
}

TEST_CASE("slide pads at the front and tiles windows") {
  ModelConfig cfg = tiny_config();
  std::mt19937_64 rng(5);

  SUBCASE("full-length segment starts at sample zero") {
    SignalMatrix s = random_signal(cfg.max_len, rng);
    WindowTensor wt = slide(s, cfg);
    CHECK(wt.n == 4);
    CHECK(wt.x.rows == 4 * 6);
    for (std::size_t i = 0; i < cfg.window; ++i)
      for (std::size_t c = 0; c < 6; ++c)
        CHECK(wt.x.at(i, c) == s.ch[c][i]);
    for (bool m : wt.pad_mask) CHECK_FALSE(m);
  }

  SUBCASE("one-window segment lands entirely in the last window") {
    SignalMatrix s = random_signal(cfg.window, rng);
    WindowTensor wt = slide(s, cfg);
    // 12 zeros prepended; the final window (start 12) equals the segment.
    for (std::size_t w = 0; w + 1 < wt.n; ++w)
      for (std::size_t i = 0; i < cfg.window; ++i)
        for (std::size_t c = 0; c < 6; ++c) {
          const std::size_t t = w * cfg.step + i;
          const double want = t < 12 ? 0.0 : s.ch[c][t - 12];
          CHECK(wt.x.at(w * cfg.window + i, c) == want);
        }
    const std::size_t last = (wt.n - 1) * cfg.window;
    for (std::size_t i = 0; i < cfg.window; ++i)
      for (std::size_t c = 0; c < 6; ++c)
        CHECK(wt.x.at(last + i, c) == s.ch[c][i]);
    CHECK(wt.pad_mask[0]);        // samples 0..5 are all padding
    CHECK_FALSE(wt.pad_mask[2]);  // reaches real data
  }

  SUBCASE("over-long segments are rejected with guidance") {
    SignalMatrix s = random_signal(cfg.max_len + 1, rng);
    CHECK_THROWS_WITH_AS(slide(s, cfg),
                         doctest::Contains("max_len"), DataError);
  }
}

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  cfg.check();  // baseline is fine

  ModelConfig bad = cfg;
  bad.step = 5;  // (18-6) % 5 != 0
  CHECK_THROWS_AS(bad.check(), ParamError);
  bad = cfg;
  bad.heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(bad.check(), ParamError);
  bad = cfg;
  bad.conv = {{4, 4}};  // even kernel
  CHECK_THROWS_AS(bad.check(), ParamError);
  bad = cfg;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.check(), ParamError);
  bad = cfg;
  bad.num_classes = 1;
  CHECK_THROWS_AS(bad.check(), ParamError);
}

TEST_CASE("parameter initialisation is seed-deterministic") {
  ModelConfig cfg = tiny_config();
  ModelParams a = init_params(cfg, 42);
  ModelParams b = init_params(cfg, 42);
  ModelParams c = init_params(cfg, 43);
  CHECK(a.count() == b.count());
  CHECK(a.count() > 0);
  bool same = true, differs = false;
  for (const auto& [name, tensor] : a.t) {
    same = same && tensor.data == b.t.at(name).data;
    differs = differs || tensor.data != c.t.at(name).data;
  }
  CHECK(same);
  CHECK(differs);
  // Forget-gate bias opens at 1, every other bias starts at zero.
  for (double v : a.t.at("lstm0.bf").data) CHECK(v == 1.0);
  for (double v : a.t.at("lstm0.bi").data) CHECK(v == 0.0);
  for (double v : a.t.at("proj.b").data) CHECK(v == 0.0);
  CHECK(a.all_finite());
}

TEST_CASE("forward pass shapes and attention rows") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 7);
  std::mt19937_64 rng(9);
  SignalMatrix s1 = random_signal(14, rng);
  SignalMatrix s2 = random_signal(17, rng);
  ForwardPass fp = model.forward({&s1, &s2}, true, nullptr);

  const std::size_t n = cfg.n_windows();
  CHECK(fp.tape->value(fp.features).rows == 2 * n);
  CHECK(fp.tape->value(fp.features).cols == cfg.d_model);
  CHECK(fp.tape->value(fp.pooled).rows == 2);
  CHECK(fp.tape->value(fp.pooled).cols == n * cfg.d_model);
  CHECK(fp.tape->value(fp.logits).rows == 2);
  CHECK(fp.tape->value(fp.logits).cols == cfg.num_classes);
  CHECK(fp.attention.size() == cfg.heads);
  for (Tape::Id head : fp.attention) {
    const Tensor& probs = fp.tape->value(head);
    CHECK(probs.rows == 2 * n);
    CHECK(probs.cols == n);
    for (std::size_t r = 0; r < probs.rows; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < probs.cols; ++j) {
        CHECK(probs.at(r, j) >= 0.0);
        sum += probs.at(r, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("single-window attention collapses to the value projection") {
  ModelConfig cfg = tiny_config();
  cfg.max_len = cfg.window;  // n = 1
  cfg.step = 1;
  Model model(cfg, 11);
  std::mt19937_64 rng(13);
  SignalMatrix s = random_signal(cfg.window, rng);
  ForwardPass fp = model.forward({&s}, false, nullptr);
  for (Tape::Id head : fp.attention) {
    const Tensor& probs = fp.tape->value(head);
    CHECK(probs.rows == 1);
    CHECK(probs.cols == 1);
    CHECK(probs.at(0, 0) == 1.0);
  }
}

TEST_CASE("toy attention matches a hand-computed softmax mixture") {
  // d_model = 1, one head, spatial/temporal stages ablated: the projection
  // routes channel-0 samples straight into scalar window embeddings, and all
  // attention projections are identity, so the attended output is exactly
  // the softmax-weighted mixture of the two embeddings.
  ModelConfig cfg;
  cfg.window = 2;
  cfg.step = 1;
  cfg.max_len = 3;  // n = 2 windows
  cfg.d_model = 1;
  cfg.heads = 1;
  cfg.lstm_layers = 1;
  cfg.dropout = 0.0;
  cfg.mlp_hidden = 2;
  cfg.num_classes = 2;
  cfg.use_spatial = false;
  cfg.use_temporal = false;
  Model model(cfg, 1);
  for (auto& [name, tensor] : model.params().t)
    for (double& v : tensor.data) v = 0.0;
  // Window rows flatten as [s(t) ch0..ch5, s(t+1) ch0..ch5]; picking row 0
  // makes h_w = ch0[start_w].
  model.params().t.at("proj.W").at(0, 0) = 1.0;
  model.params().t.at("attn.Wq").at(0, 0) = 1.0;
  model.params().t.at("attn.Wk").at(0, 0) = 1.0;
  model.params().t.at("attn.Wv").at(0, 0) = 1.0;
  model.params().t.at("attn.Wo").at(0, 0) = 1.0;

  const double h0 = 0.3, h1 = -0.7;
  SignalMatrix s = SignalMatrix::zeros(3);
  s.ch[0] = {h0, h1, 0.25};  // windows start at samples 0 and 1

  EncoderOutput out = model.encode(s);
  const double e00 = std::exp(h0 * h0), e01 = std::exp(h0 * h1);
  const double e10 = std::exp(h1 * h0), e11 = std::exp(h1 * h1);
  const double a0 = (e00 * h0 + e01 * h1) / (e00 + e01);
  const double a1 = (e10 * h0 + e11 * h1) / (e10 + e11);
  CHECK(std::abs(out.attended.at(0, 0) - a0) <= 1e-12);
  CHECK(std::abs(out.attended.at(1, 0) - a1) <= 1e-12);
}

TEST_CASE("zero LSTM weights silence the hidden sequence") {
  // With all gate weights and biases at zero: f = i = o = 0.5 and the
  // candidate is tanh(0) = 0, so c_t = 0.5 c_{t-1} stays 0 and h_t = 0.
  ModelConfig cfg = tiny_config();
  cfg.use_attention = false;
  Model model(cfg, 3);
  for (auto& [name, tensor] : model.params().t)
    if (name.rfind("lstm", 0) == 0)
      for (double& v : tensor.data) v = 0.0;
  std::mt19937_64 rng(17);
  SignalMatrix s = random_signal(15, rng);
  ForwardPass fp = model.forward({&s}, false, nullptr);
  const Tensor& h = fp.tape->value(fp.features);
  for (double v : h.data) CHECK(v == 0.0);
}

TEST_CASE("LSTM layer matches a brute-force step oracle") {
  // Spatial stage ablated so the oracle can reproduce the projection with
  // plain loops; one LSTM layer, attention off: features are exactly the
  // hidden sequence.
  ModelConfig cfg;
  cfg.window = 3;
  cfg.step = 3;
  cfg.max_len = 9;  // n = 3 steps
  cfg.d_model = 4;
  cfg.heads = 1;
  cfg.lstm_layers = 1;
  cfg.dropout = 0.0;
  cfg.mlp_hidden = 4;
  cfg.num_classes = 2;
  cfg.use_spatial = false;
  cfg.use_attention = false;
  Model model(cfg, 23);
  std::mt19937_64 rng(29);
  SignalMatrix s = random_signal(9, rng);

  ForwardPass fp = model.forward({&s}, false, nullptr);
  const Tensor& got = fp.tape->value(fp.features);

  // Oracle: windows -> projection -> gate recursions, all in plain loops.
  const auto& P = model.params().t;
  const std::size_t d = cfg.d_model;
  std::vector<std::vector<double>> h_prev(1, std::vector<double>(d, 0.0));
  std::vector<double> c_prev(d, 0.0), h_cur(d, 0.0);
  for (std::size_t w = 0; w < 3; ++w) {
    // Flattened window: [sample, channel] in row-major order.
    std::vector<double> xw(cfg.window * 6);
    for (std::size_t i = 0; i < cfg.window; ++i)
      for (std::size_t c = 0; c < 6; ++c)
        xw[i * 6 + c] = s.ch[c][w * cfg.window + i];
    std::vector<double> hc(d);
    for (std::size_t j = 0; j < d; ++j) {
      double acc = P.at("proj.b").at(0, j);
      for (std::size_t i = 0; i < xw.size(); ++i)
        acc += xw[i] * P.at("proj.W").at(i, j);
      hc[j] = acc;
    }
    auto gate = [&](const std::string& g, std::size_t j) {
      double acc = P.at("lstm0.b" + g).at(0, j);
      for (std::size_t i = 0; i < d; ++i) {
        acc += hc[i] * P.at("lstm0.W" + g).at(i, j);
        acc += h_prev[0][i] * P.at("lstm0.U" + g).at(i, j);
      }
      return acc;
    };
    std::vector<double> c_new(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double f = 1.0 / (1.0 + std::exp(-gate("f", j)));
      const double i = 1.0 / (1.0 + std::exp(-gate("i", j)));
      const double o = 1.0 / (1.0 + std::exp(-gate("o", j)));
      const double g = std::tanh(gate("c", j));
      c_new[j] = f * c_prev[j] + i * g;
      h_cur[j] = o * std::tanh(c_new[j]);
    }
    c_prev = c_new;
    h_prev[0] = h_cur;
    for (std::size_t j = 0; j < d; ++j)
      CHECK(std::abs(got.at(w, j) - h_cur[j]) <= 1e-12);
  }
}

TEST_CASE("front-pad invariance: explicit leading zeros change nothing") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 31);
  std::mt19937_64 rng(37);
  SignalMatrix s = random_signal(12, rng);
  SignalMatrix padded = SignalMatrix::zeros(15);
  for (std::size_t c = 0; c < 6; ++c)
    for (std::size_t i = 0; i < 12; ++i) padded.ch[c][i + 3] = s.ch[c][i];
  EncoderOutput a = model.encode(s);
  EncoderOutput b = model.encode(padded);
  CHECK(a.pooled.data == b.pooled.data);  // bit-exact
}

TEST_CASE("encode is deterministic and batch-position independent") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 41);
  std::mt19937_64 rng(43);
  SignalMatrix s1 = random_signal(13, rng);
  SignalMatrix s2 = random_signal(16, rng);
  EncoderOutput solo = model.encode(s1);
  EncoderOutput again = model.encode(s1);
  CHECK(solo.pooled.data == again.pooled.data);

  // The same segment encoded inside a different batch yields the same rows.
  ForwardPass fp = model.forward({&s2, &s1}, false, nullptr);
  const Tensor& pooled = fp.tape->value(fp.pooled);
  for (std::size_t j = 0; j < pooled.cols; ++j)
    CHECK(pooled.at(1, j) == solo.pooled.at(0, j));
}

TEST_CASE("similarity identity, symmetry, and weight-sharing") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 47);
  std::mt19937_64 rng(53);
  SignalMatrix a = random_signal(14, rng);
  SignalMatrix b = random_signal(11, rng);

  CHECK(std::abs(model.similarity(a, a) - 1.0) <= 1e-6);
  const double ab = model.similarity(a, b);
  const double ba = model.similarity(b, a);
  CHECK(ab == ba);  // bit-identical
  CHECK(ab >= -1.0);
  CHECK(ab <= 1.0);

  // Both branches read the same storage: perturbing the shared parameters
  // moves the pair score but keeps self-similarity pinned at 1.
  for (double& v : model.params().t.at("proj.W").data) v += 0.25;
  CHECK(model.similarity(a, b) != ab);
  CHECK(std::abs(model.similarity(a, a) - 1.0) <= 1e-6);
}

TEST_CASE("classifier emits a probability vector") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 59);
  std::mt19937_64 rng(61);
  SignalMatrix s = random_signal(10, rng);
  std::vector<double> probs = model.classify(s);
  CHECK(probs.size() == cfg.num_classes);
  double sum = 0.0;
  for (double p : probs) {
    CHECK(p >= 0.0);
    sum += p;
  }
  CHECK(std::abs(sum - 1.0) <= 1e-6);
}

TEST_CASE("self-similarity loss sends zero gradient to every parameter") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 67);
  std::mt19937_64 rng(71);
  SignalMatrix s = random_signal(12, rng);
  ForwardPass fp = model.forward({&s, &s}, false, nullptr);
  Tape& tape = *fp.tape;
  auto pa = tape.gather_rows(fp.pooled, {0});
  auto pb = tape.gather_rows(fp.pooled, {1});
  auto loss = tape.mean_all(tape.cosine_rows(pa, pb));
  CHECK(std::abs(tape.value(loss).data[0] - 1.0) <= 1e-12);
  tape.backward(loss);
  for (const auto& [name, id] : fp.params) {
    if (!tape.has_grad(id)) continue;
    for (double g : tape.grad(id).data) {
      CAPTURE(name);
      CHECK(std::abs(g) <= 1e-8);
    }
  }
}

TEST_CASE("zero-weighted loss yields all-zero gradients") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 73);
  std::mt19937_64 rng(79);
  SignalMatrix a = random_signal(12, rng);
  SignalMatrix b = random_signal(12, rng);
  ForwardPass fp = model.forward({&a, &b}, false, nullptr);
  Tape& tape = *fp.tape;
  auto pa = tape.gather_rows(fp.pooled, {0});
  auto pb = tape.gather_rows(fp.pooled, {1});
  auto loss = tape.scale(tape.mean_all(tape.cosine_rows(pa, pb)), 0.0);
  tape.backward(loss);
  for (const auto& [name, id] : fp.params) {
    if (!tape.has_grad(id)) continue;
    for (double g : tape.grad(id).data) CHECK(g == 0.0);
  }
}

TEST_CASE("spot finite-difference check through the full model") {
  // The exhaustive sweep lives in the acceptance suite; here a handful of
  // sampled coordinates guard the wiring on every run.
  ModelConfig cfg = tiny_config();
  Model model(cfg, 83);
  // Padded windows are all-zero, so their conv pre-activation equals the
  // bias exactly; nudge every bias off zero to keep the central difference
  // away from the ReLU kink.
  std::mt19937_64 jitter(113);
  for (auto& [name, tensor] : model.params().t)
    if (tensor.rows == 1)
      for (double& v : tensor.data) v += 0.05 + 0.1 * u01(jitter);
  std::mt19937_64 rng(89);
  SignalMatrix a = random_signal(14, rng);
  SignalMatrix b = random_signal(12, rng);

  auto loss_value = [&](const Model& m) {
    ForwardPass fp = m.forward({&a, &b}, true, nullptr);
    Tape& tape = *fp.tape;
    auto pa = tape.gather_rows(fp.pooled, {0});
    auto pb = tape.gather_rows(fp.pooled, {1});
    auto sim = tape.cosine_rows(pa, pb);
    auto target = tape.leaf(Tensor::from(1, 1, {0.8}));
    auto mse = tape.mean_all(tape.square(tape.sub(sim, target)));
    auto ce = tape.mean_all(tape.cross_entropy_rows(fp.logits, {1, 2}));
    return tape.value(tape.add(mse, ce)).data[0];
  };

  ForwardPass fp = model.forward({&a, &b}, true, nullptr);
  Tape& tape = *fp.tape;
  auto pa = tape.gather_rows(fp.pooled, {0});
  auto pb = tape.gather_rows(fp.pooled, {1});
  auto sim = tape.cosine_rows(pa, pb);
  auto target = tape.leaf(Tensor::from(1, 1, {0.8}));
  auto mse = tape.mean_all(tape.square(tape.sub(sim, target)));
  auto ce = tape.mean_all(tape.cross_entropy_rows(fp.logits, {1, 2}));
  auto loss = tape.add(mse, ce);
  tape.backward(loss);

  std::mt19937_64 pick(97);
  const double h = 1e-5;
  for (const auto& [name, id] : fp.params) {
    if (!tape.has_grad(id)) continue;
    const Tensor& grad = tape.grad(id);
    // Two random coordinates per tensor.
    for (int rep = 0; rep < 2; ++rep) {
      const std::size_t i = pick() % grad.numel();
      Model probe = model;
      probe.params().t.at(name).data[i] += h;
      const double fp_val = loss_value(probe);
      probe.params().t.at(name).data[i] -= 2 * h;
      const double fm_val = loss_value(probe);
      const double fd = (fp_val - fm_val) / (2 * h);
      const double an = grad.data[i];
      CAPTURE(name);
      CAPTURE(i);
      CHECK(std::abs(fd - an) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("checkpoint round trip is byte-exact and self-describing") {
  TempDir tmp;
  ModelConfig cfg = tiny_config();
  Model model(cfg, 101);
  std::mt19937_64 rng(103);
  SignalMatrix a = random_signal(14, rng);
  SignalMatrix b = random_signal(12, rng);
  const double before = model.similarity(a, b);

  const std::string p1 = (tmp.path / "m1.ckpt").string();
  const std::string p2 = (tmp.path / "m2.ckpt").string();
  save_checkpoint(model, p1);
  Model loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);

  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(p1) == slurp(p2));  // save-load-save fixed point

  CHECK(loaded.config().d_model == cfg.d_model);
  CHECK(loaded.config().conv.size() == cfg.conv.size());
  // Parameters ride through float32, so predictions agree only approximately.
  CHECK(std::abs(loaded.similarity(a, b) - before) <= 1e-3);
  // But the loaded model is exactly reproducible with itself.
  CHECK(loaded.similarity(a, b) == loaded.similarity(a, b));
}

TEST_CASE("checkpoint corruption is rejected") {
  TempDir tmp;
  Model model(tiny_config(), 107);
  const std::string path = (tmp.path / "m.ckpt").string();
  save_checkpoint(model, path);

  SUBCASE("truncated payload") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes(std::istreambuf_iterator<char>(in), {});
    in.close();
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
  }

  SUBCASE("tensor table tampered") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes(std::istreambuf_iterator<char>(in), {});
    in.close();
    const std::string from = "cls.W1";
    const std::string to = "cls.WX";  // same length keeps offsets valid
    const auto pos = bytes.find(from);
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, from.size(), to);
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path),
                         doctest::Contains("mismatch"), DataError);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint((tmp.path / "absent.ckpt").string()),
                    DataError);
  }
}

#include "repq/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <utility>

#include "json.hpp"
#include "repq/errors.hpp"
#include "repq/kernels.hpp"

namespace repq {

namespace {

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal draw that only touches the raw 64-bit stream, so the
// sequence is identical on every standard library implementation.
double normal01(std::mt19937_64& rng) {
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace

std::size_t ModelConfig::conv_flat_dim() const {
  if (!use_spatial) return window * 6;
  std::size_t len = window;
  std::size_t channels = 6;
  for (const ConvLayerSpec& layer : conv) {
    len /= 2;  // same-padded conv keeps the length; the pool halves it
    channels = layer.channels;
  }
  return len * channels;
}

void ModelConfig::check() const {
  if (window < 2) throw ParamError("model: window must be at least 2 samples");
  if (step < 1) throw ParamError("model: step must be positive");
  if (max_len < window)
    throw ParamError("model: max_len must be at least one window");
  if ((max_len - window) % step != 0)
    throw ParamError(
        "model: (max_len - window) must be a multiple of step so windows "
        "tile the padded segment exactly");
  if (d_model == 0 || heads == 0 || d_model % heads != 0)
    throw ParamError("model: d_model must be a positive multiple of heads");
  if (lstm_layers == 0)
    throw ParamError("model: at least one recurrent layer is required");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ParamError("model: dropout must lie in [0, 1)");
  if (mlp_hidden == 0) throw ParamError("model: mlp_hidden must be positive");
  if (num_classes < 2)
    throw ParamError("model: at least two classes are required");
  if (use_spatial) {
    if (conv.empty())
      throw ParamError("model: spatial encoder needs at least one conv layer");
    std::size_t len = window;
    for (const ConvLayerSpec& layer : conv) {
      if (layer.channels == 0)
        throw ParamError("model: conv layer with zero channels");
      if (layer.kernel % 2 == 0 || layer.kernel == 0)
        throw ParamError("model: conv kernels must be odd");
      if (len < 2)
        throw ParamError(
            "model: window too short for the conv/pool stack (length "
            "underflows)");
      len /= 2;
    }
    if (len == 0)
      throw ParamError("model: conv/pool stack consumed the whole window");
  }
}

WindowTensor slide(const SignalMatrix& signal, const ModelConfig& cfg) {
  const std::size_t len = signal.length();
  if (len == 0) throw DataError("slide: empty segment");
  if (len > cfg.max_len)
    throw DataError("slide: segment of " + std::to_string(len) +
                    " samples exceeds max_len " + std::to_string(cfg.max_len) +
                    "; raise max_len in the model configuration");
  const std::size_t n = cfg.n_windows();
  const std::size_t k = cfg.window;
  const std::size_t pad = cfg.max_len - len;
  WindowTensor wt;
  wt.n = n;
  wt.x = Tensor(n * k, 6);
  wt.pad_mask.assign(n, false);
  for (std::size_t w = 0; w < n; ++w) {
    const std::size_t start = w * cfg.step;
    wt.pad_mask[w] = start + k <= pad;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t t = start + i;
      if (t < pad) continue;  // front padding stays zero
      const std::size_t src = t - pad;
      for (std::size_t c = 0; c < 6; ++c)
        wt.x.at(w * k + i, c) = signal.ch[c][src];
    }
  }
  return wt;
}

std::size_t ModelParams::count() const {
  std::size_t total = 0;
  for (const auto& [name, tensor] : t) total += tensor.numel();
  return total;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, tensor] : t)
    if (!tensor.all_finite()) return false;
  return true;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.check();
  ModelParams p;
  auto add = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    p.t.emplace(name, Tensor(rows, cols));
  };

  if (cfg.use_spatial) {
    std::size_t in_ch = 6;
    for (std::size_t li = 0; li < cfg.conv.size(); ++li) {
      const ConvLayerSpec& layer = cfg.conv[li];
      const std::string base = "conv" + std::to_string(li);
      add(base + ".W", layer.kernel * in_ch, layer.channels);
      add(base + ".b", 1, layer.channels);
      in_ch = layer.channels;
    }
  }
  add("proj.W", cfg.conv_flat_dim(), cfg.d_model);
  add("proj.b", 1, cfg.d_model);

  if (cfg.use_temporal) {
    for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
      const std::string base = "lstm" + std::to_string(l) + ".";
      for (const char* g : {"f", "i", "o", "c"}) {
        add(base + "W" + g, cfg.d_model, cfg.d_model);
        add(base + "U" + g, cfg.d_model, cfg.d_model);
        add(base + "b" + g, 1, cfg.d_model);
      }
    }
  }

  if (cfg.use_attention) {
    add("attn.Wq", cfg.d_model, cfg.d_model);
    add("attn.Wk", cfg.d_model, cfg.d_model);
    add("attn.Wv", cfg.d_model, cfg.d_model);
    add("attn.Wo", cfg.d_model, cfg.d_model);
  }

  add("cls.W1", cfg.n_windows() * cfg.d_model, cfg.mlp_hidden);
  add("cls.b1", 1, cfg.mlp_hidden);
  add("cls.W2", cfg.mlp_hidden, cfg.num_classes);
  add("cls.b2", 1, cfg.num_classes);

  // Fill in name order from one seeded stream. Weight scale follows the
  // receiving nonlinearity: sqrt(2/fan_in) into ReLU stages, sqrt(1/fan_in)
  // elsewhere; biases start at zero except the forget gate, which opens at 1
  // so early training can carry state across steps.
  std::mt19937_64 rng(seed);
  for (auto& [name, tensor] : p.t) {
    const bool is_bias = tensor.rows == 1 && name.find(".b") != std::string::npos;
    if (is_bias) {
      const double fill = name.size() >= 2 &&
                          name.compare(name.size() - 2, 2, "bf") == 0
                              ? 1.0
                              : 0.0;
      for (double& v : tensor.data) v = fill;
      continue;
    }
    const bool into_relu =
        name.rfind("conv", 0) == 0 || name == "cls.W1";
    const double scale =
        std::sqrt((into_relu ? 2.0 : 1.0) / static_cast<double>(tensor.rows));
    for (double& v : tensor.data) v = scale * normal01(rng);
  }
  return p;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.check();
  params_ = init_params(cfg_, seed);
  scaler_.fit_source = "identity";
  scaler_.fitted = true;
}

ForwardPass Model::forward(const std::vector<const SignalMatrix*>& signals,
                           bool with_classifier, std::mt19937_64* rng) const {
  if (signals.empty()) throw ParamError("forward: empty batch");
  const std::size_t batch = signals.size();
  const std::size_t n = cfg_.n_windows();
  const std::size_t k = cfg_.window;

  ForwardPass fp;
  fp.tape = std::make_unique<Tape>();
  Tape& tape = *fp.tape;
  fp.batch = batch;

  Tensor x_all(batch * n * k, 6);
  for (std::size_t b = 0; b < batch; ++b) {
    WindowTensor wt = slide(*signals[b], cfg_);
    std::copy(wt.x.data.begin(), wt.x.data.end(),
              x_all.data.begin() + b * n * k * 6);
  }
  const Tape::Id input = tape.leaf(std::move(x_all));

  for (const auto& [name, tensor] : params_.t)
    fp.params[name] = tape.leaf(tensor, true, name);
  auto P = [&](const std::string& name) {
    auto it = fp.params.find(name);
    if (it == fp.params.end())
      throw ParamError("forward: missing parameter tensor '" + name + "'");
    return it->second;
  };

  const bool train = rng != nullptr && cfg_.dropout > 0.0;
  auto maybe_dropout = [&](Tape::Id id) {
    if (!train) return id;
    const std::size_t count = tape.value(id).numel();
    std::vector<double> mask(count);
    const double keep = 1.0 - cfg_.dropout;
    for (double& m : mask) m = u01(*rng) < cfg_.dropout ? 0.0 : 1.0 / keep;
    return tape.dropout(id, std::move(mask));
  };

  // Spatial encoder: window-wise conv stack (or a bare projection when
  // ablated), ending in one embedding per window.
  Tape::Id cur = input;
  if (cfg_.use_spatial) {
    std::size_t len = k;
    std::size_t channels = 6;
    for (std::size_t li = 0; li < cfg_.conv.size(); ++li) {
      const ConvLayerSpec& layer = cfg_.conv[li];
      const std::string base = "conv" + std::to_string(li);
      const Tape::Id cols =
          tape.im2col(cur, batch * n, len, channels, layer.kernel);
      const Tape::Id z = tape.add_bias_rows(tape.matmul(cols, P(base + ".W")),
                                            P(base + ".b"));
      const Tape::Id act = maybe_dropout(tape.relu(z));
      cur = tape.maxpool(act, batch * n, len, layer.channels);
      len /= 2;
      channels = layer.channels;
    }
    cur = tape.reshape(cur, batch * n, len * channels);
  } else {
    cur = tape.reshape(cur, batch * n, k * 6);
  }
  const Tape::Id hc =
      tape.add_bias_rows(tape.matmul(cur, P("proj.W")), P("proj.b"));

  // Temporal encoder: stacked LSTM over the window sequence.
  Tape::Id hidden_seq = hc;
  if (cfg_.use_temporal) {
    for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
      const std::string base = "lstm" + std::to_string(l) + ".";
      Tape::Id h_prev = tape.leaf(Tensor(batch, cfg_.d_model));
      Tape::Id c_prev = tape.leaf(Tensor(batch, cfg_.d_model));
      std::vector<Tape::Id> hs;
      hs.reserve(n);
      for (std::size_t t = 0; t < n; ++t) {
        const Tape::Id x_t = tape.slice_time(hidden_seq, batch, n, t);
        auto gate = [&](const char* name) {
          return tape.add_bias_rows(
              tape.add(tape.matmul(x_t, P(base + "W" + name)),
                       tape.matmul(h_prev, P(base + "U" + name))),
              P(base + "b" + name));
        };
        const Tape::Id f = tape.sigmoid(gate("f"));
        const Tape::Id i = tape.sigmoid(gate("i"));
        const Tape::Id o = tape.sigmoid(gate("o"));
        const Tape::Id g = tape.tanh(gate("c"));
        const Tape::Id c_t =
            tape.add(tape.hadamard(f, c_prev), tape.hadamard(i, g));
        const Tape::Id h_t = tape.hadamard(o, tape.tanh(c_t));
        h_prev = h_t;
        c_prev = c_t;
        hs.push_back(h_t);
      }
      hidden_seq = tape.stack_time(hs);
      if (l + 1 < cfg_.lstm_layers) hidden_seq = maybe_dropout(hidden_seq);
    }
  }

  // Multi-head self-attention over the hidden sequence.
  Tape::Id attended = hidden_seq;
  if (cfg_.use_attention) {
    const Tape::Id q = tape.matmul(hidden_seq, P("attn.Wq"));
    const Tape::Id kproj = tape.matmul(hidden_seq, P("attn.Wk"));
    const Tape::Id v = tape.matmul(hidden_seq, P("attn.Wv"));
    const std::size_t dk = cfg_.head_dim();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<Tape::Id> contexts;
    contexts.reserve(cfg_.heads);
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const Tape::Id qh = tape.slice_cols(q, h * dk, (h + 1) * dk);
      const Tape::Id kh = tape.slice_cols(kproj, h * dk, (h + 1) * dk);
      const Tape::Id vh = tape.slice_cols(v, h * dk, (h + 1) * dk);
      const Tape::Id scores =
          tape.scale(tape.bmm(qh, kh, batch, false, true), inv_sqrt_dk);
      const Tape::Id probs = tape.softmax_rows(scores);
      fp.attention.push_back(probs);
      contexts.push_back(tape.bmm(probs, vh, batch));
    }
    attended = tape.matmul(tape.concat_cols(contexts), P("attn.Wo"));
  }
  fp.features = attended;
  fp.pooled = tape.reshape(attended, batch, n * cfg_.d_model);

  if (with_classifier) {
    const Tape::Id h1 = tape.relu(tape.add_bias_rows(
        tape.matmul(fp.pooled, P("cls.W1")), P("cls.b1")));
    fp.logits =
        tape.add_bias_rows(tape.matmul(h1, P("cls.W2")), P("cls.b2"));
  }
  return fp;
}

EncoderOutput Model::encode(const SignalMatrix& signal) const {
  const SignalMatrix std_signal = apply_scaler(scaler_, signal);
  ForwardPass fp = forward({&std_signal}, false, nullptr);
  EncoderOutput out;
  out.attended = fp.tape->value(fp.features);
  out.pooled = fp.tape->value(fp.pooled);
  return out;
}

double Model::similarity(const SignalMatrix& a, const SignalMatrix& b) const {
  const SignalMatrix sa = apply_scaler(scaler_, a);
  const SignalMatrix sb = apply_scaler(scaler_, b);
  ForwardPass fp = forward({&sa, &sb}, false, nullptr);
  const Tensor& pooled = fp.tape->value(fp.pooled);
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t j = 0; j < pooled.cols; ++j) {
    const double pa = pooled.at(0, j);
    const double pb = pooled.at(1, j);
    dot += pa * pb;
    na2 += pa * pa;
    nb2 += pb * pb;
  }
  if (na2 == 0.0 || nb2 == 0.0) {
    std::fprintf(stderr,
                 "warning: zero-norm embedding, similarity defined as 0\n");
    return 0.0;
  }
  return dot / (std::sqrt(na2) * std::sqrt(nb2));
}

std::vector<double> Model::classify(const SignalMatrix& signal) const {
  const SignalMatrix std_signal = apply_scaler(scaler_, signal);
  ForwardPass fp = forward({&std_signal}, true, nullptr);
  const Tensor& logits = fp.tape->value(fp.logits);
  std::vector<double> probs(logits.cols);
  kernels::softmax_rows(logits.data.data(), probs.data(), 1, logits.cols);
  return probs;
}

namespace {

nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json conv = nlohmann::json::array();
  for (const ConvLayerSpec& layer : cfg.conv)
    conv.push_back({{"channels", layer.channels}, {"kernel", layer.kernel}});
  return {{"window", cfg.window},
          {"step", cfg.step},
          {"max_len", cfg.max_len},
          {"d_model", cfg.d_model},
          {"heads", cfg.heads},
          {"lstm_layers", cfg.lstm_layers},
          {"dropout", cfg.dropout},
          {"conv", conv},
          {"mlp_hidden", cfg.mlp_hidden},
          {"num_classes", cfg.num_classes},
          {"use_spatial", cfg.use_spatial},
          {"use_temporal", cfg.use_temporal},
          {"use_attention", cfg.use_attention}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.window = j.at("window").get<std::size_t>();
  cfg.step = j.at("step").get<std::size_t>();
  cfg.max_len = j.at("max_len").get<std::size_t>();
  cfg.d_model = j.at("d_model").get<std::size_t>();
  cfg.heads = j.at("heads").get<std::size_t>();
  cfg.lstm_layers = j.at("lstm_layers").get<std::size_t>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.conv.clear();
  for (const auto& layer : j.at("conv"))
    cfg.conv.push_back({layer.at("channels").get<std::size_t>(),
                        layer.at("kernel").get<std::size_t>()});
  cfg.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  cfg.num_classes = j.at("num_classes").get<std::size_t>();
  cfg.use_spatial = j.at("use_spatial").get<bool>();
  cfg.use_temporal = j.at("use_temporal").get<bool>();
  cfg.use_attention = j.at("use_attention").get<bool>();
  return cfg;
}

void write_u32_le(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("checkpoint: truncated header length");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint32_t float_bits(float f) {
  std::uint32_t u;
  static_assert(sizeof(f) == sizeof(u));
  std::memcpy(&u, &f, sizeof(u));
  return u;
}

float bits_float(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, sizeof(f));
  return f;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  nlohmann::json header;
  header["version"] = 1;
  header["config"] = config_to_json(model.config());
  const AxisScaler& s = model.scaler();
  header["scaler"] = {{"mean", s.mean},
                      {"stddev", s.stddev},
                      {"fit_source", s.fit_source},
                      {"fitted", s.fitted}};
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, tensor] : model.params().t) {
    tensors.push_back({{"name", name},
                       {"rows", tensor.rows},
                       {"cols", tensor.cols},
                       {"offset", offset}});
    offset += tensor.numel();
  }
  header["tensors"] = tensors;
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write '" + path + "'");
  write_u32_le(out, static_cast<std::uint32_t>(head.size()));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& [name, tensor] : model.params().t) {
    for (double v : tensor.data) {
      const std::uint32_t bits = float_bits(static_cast<float>(v));
      unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                            static_cast<unsigned char>((bits >> 8) & 0xff),
                            static_cast<unsigned char>((bits >> 16) & 0xff),
                            static_cast<unsigned char>((bits >> 24) & 0xff)};
      out.write(reinterpret_cast<const char*>(b), 4);
    }
  }
  if (!out) throw DataError("checkpoint: write failed for '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
  const std::uint32_t head_len = read_u32_le(in);
  std::string head(head_len, '\0');
  in.read(head.data(), head_len);
  if (!in) throw DataError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }
  const int version = header.at("version").get<int>();
  if (version != 1)
    throw DataError("checkpoint: unsupported version " +
                    std::to_string(version));

  Model model(config_from_json(header.at("config")), 0);
  AxisScaler& scaler = model.scaler();
  const auto& js = header.at("scaler");
  for (std::size_t i = 0; i < 6; ++i) {
    scaler.mean[i] = js.at("mean").at(i).get<double>();
    scaler.stddev[i] = js.at("stddev").at(i).get<double>();
  }
  scaler.fit_source = js.at("fit_source").get<std::string>();
  scaler.fitted = js.at("fitted").get<bool>();

  // The tensor table must match what the config implies; anything else means
  // the file belongs to a different architecture.
  const auto& tensors = header.at("tensors");
  if (tensors.size() != model.params().t.size())
    throw DataError("checkpoint: tensor count mismatch (version 1 layout)");
  std::size_t expected_offset = 0;
  std::size_t idx = 0;
  for (auto& [name, tensor] : model.params().t) {
    const auto& entry = tensors.at(idx++);
    if (entry.at("name").get<std::string>() != name ||
        entry.at("rows").get<std::size_t>() != tensor.rows ||
        entry.at("cols").get<std::size_t>() != tensor.cols ||
        entry.at("offset").get<std::size_t>() != expected_offset)
      throw DataError("checkpoint: shape mismatch at tensor '" + name +
                      "' (version 1 layout)");
    expected_offset += tensor.numel();
    for (double& v : tensor.data) {
      unsigned char b[4];
      in.read(reinterpret_cast<char*>(b), 4);
      if (!in) throw DataError("checkpoint: truncated payload");
      const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                                 (static_cast<std::uint32_t>(b[1]) << 8) |
                                 (static_cast<std::uint32_t>(b[2]) << 16) |
                                 (static_cast<std::uint32_t>(b[3]) << 24);
      v = static_cast<double>(bits_float(bits));
    }
  }
  char extra;
  if (in.read(&extra, 1))
    throw DataError("checkpoint: trailing bytes after payload");
  return model;
}

}  // namespace repq

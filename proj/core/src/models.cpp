#include "promptimpute/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json_detail.hpp"
#include "promptimpute/errors.hpp"
#include "promptimpute/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written as little-endian float64");

namespace prompt_impute {

namespace {

struct TensorSpec {
  std::string name;
  Dims shape;
  int fan_in;  // 0 = bias, initialized to zero
};

// The single source of truth for each architecture's tensors: names, shapes,
// and initialization fan-in, in draw/traversal order.
std::vector<TensorSpec> tensor_specs(const ArchConfig& cfg) {
  const int d = cfg.hidden_dim;
  const int n = cfg.input_dim;
  std::vector<TensorSpec> specs;
  switch (cfg.backbone) {
    case BackboneKind::rnn:
      for (int k = 1; k <= cfg.layers; ++k) {
        const int in = k == 1 ? n : d;
        const std::string p = "rnn" + std::to_string(k) + ".";
        specs.push_back({p + "W", {in, d}, in});
        specs.push_back({p + "U", {d, d}, d});
        specs.push_back({p + "b", {d}, 0});
      }
      break;
    case BackboneKind::gru:
      for (int k = 1; k <= cfg.layers; ++k) {
        const int in = k == 1 ? n : d;
        const std::string p = "gru" + std::to_string(k) + ".";
        for (const char* gate : {"r", "z", "n"}) {
          specs.push_back({p + "W" + gate, {in, d}, in});
          specs.push_back({p + "U" + gate, {d, d}, d});
          specs.push_back({p + "b" + gate, {d}, 0});
        }
      }
      break;
    case BackboneKind::attention:
      specs.push_back({"attn.in.W", {n, d}, n});
      specs.push_back({"attn.in.b", {d}, 0});
      for (int k = 1; k <= cfg.layers; ++k) {
        const std::string p = "attn" + std::to_string(k) + ".";
        for (const char* mat : {"Wq", "Wk", "Wv", "Wo"}) {
          specs.push_back({p + mat, {d, d}, d});
          specs.push_back({p + std::string("b") + mat[1], {d}, 0});
        }
        specs.push_back({p + "ff.W1", {d, d}, d});
        specs.push_back({p + "ff.b1", {d}, 0});
        specs.push_back({p + "ff.W2", {d, d}, d});
        specs.push_back({p + "ff.b2", {d}, 0});
      }
      break;
  }
  if (cfg.head == HeadKind::linear_classifier) {
    specs.push_back({"head.w", {d, 1}, d});
    specs.push_back({"head.b", {1}, 0});
  } else {
    specs.push_back({"head.W1", {d, d}, d});
    specs.push_back({"head.b1", {d}, 0});
    specs.push_back({"head.W2", {d, 1}, d});
    specs.push_back({"head.b2", {1}, 0});
  }
  return specs;
}

// Sinusoidal position table for `length` rows of width d, as a constant.
Tensor positional_encoding(int length, int d) {
  std::vector<double> pe(static_cast<std::size_t>(length) * d);
  for (int l = 0; l < length; ++l)
    for (int j = 0; j < d; ++j) {
      const int pair = j / 2;
      const double freq = std::pow(10000.0, -2.0 * pair / static_cast<double>(d));
      const double angle = l * freq;
      pe[static_cast<std::size_t>(l) * d + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return tensor_create({length, d}, std::move(pe));
}

Tensor recurrent_forward(Tape& tape, const ArchConfig& cfg, const ModelParams& params,
                         const Tensor& x, int length) {
  const int d = cfg.hidden_dim;
  std::vector<Tensor> sequence(static_cast<std::size_t>(length));
  for (int l = 0; l < length; ++l) sequence[static_cast<std::size_t>(l)] = tape.slice_rows(x, l, l + 1);

  const Tensor ones = tensor_full({1, d}, 1.0);
  Tensor top;
  for (int k = 1; k <= cfg.layers; ++k) {
    Tensor h = tensor_zeros({1, d});
    if (cfg.backbone == BackboneKind::rnn) {
      const std::string p = "rnn" + std::to_string(k) + ".";
      const Tensor& w = params.find(p + "W");
      const Tensor& u = params.find(p + "U");
      const Tensor& b = params.find(p + "b");
      for (int l = 0; l < length; ++l) {
        const Tensor& in = sequence[static_cast<std::size_t>(l)];
        h = tape.tanh(tape.add(tape.add(tape.matmul(in, w), tape.matmul(h, u)), b));
        sequence[static_cast<std::size_t>(l)] = h;
      }
    } else {
      const std::string p = "gru" + std::to_string(k) + ".";
      const Tensor& wr = params.find(p + "Wr");
      const Tensor& ur = params.find(p + "Ur");
      const Tensor& br = params.find(p + "br");
      const Tensor& wz = params.find(p + "Wz");
      const Tensor& uz = params.find(p + "Uz");
      const Tensor& bz = params.find(p + "bz");
      const Tensor& wn = params.find(p + "Wn");
      const Tensor& un = params.find(p + "Un");
      const Tensor& bn = params.find(p + "bn");
      for (int l = 0; l < length; ++l) {
        const Tensor& in = sequence[static_cast<std::size_t>(l)];
        Tensor r = tape.sigmoid(tape.add(tape.add(tape.matmul(in, wr), tape.matmul(h, ur)), br));
        Tensor z = tape.sigmoid(tape.add(tape.add(tape.matmul(in, wz), tape.matmul(h, uz)), bz));
        Tensor cand =
            tape.tanh(tape.add(tape.add(tape.matmul(in, wn), tape.matmul(tape.mul(r, h), un)), bn));
        // h = z*h + (1-z)*cand: forcing the update gate to 1 keeps the
        // previous state untouched.
        h = tape.add(tape.mul(z, h), tape.mul(tape.sub(ones, z), cand));
        sequence[static_cast<std::size_t>(l)] = h;
      }
    }
    top = h;
  }
  return top;  // hidden state at the record's true last step
}

Tensor attention_forward(Tape& tape, const ArchConfig& cfg, const ModelParams& params,
                         const Tensor& x, int length) {
  const int d = cfg.hidden_dim;
  Tensor h = tape.add(tape.matmul(tape.slice_rows(x, 0, length), params.find("attn.in.W")),
                      params.find("attn.in.b"));
  h = tape.add(h, positional_encoding(length, d));
  const Tensor scale = tensor_full({d}, 1.0 / std::sqrt(static_cast<double>(d)));
  for (int k = 1; k <= cfg.layers; ++k) {
    const std::string p = "attn" + std::to_string(k) + ".";
    Tensor q = tape.add(tape.matmul(h, params.find(p + "Wq")), params.find(p + "bq"));
    Tensor key = tape.add(tape.matmul(h, params.find(p + "Wk")), params.find(p + "bk"));
    Tensor v = tape.add(tape.matmul(h, params.find(p + "Wv")), params.find(p + "bv"));
    Tensor attn = tape.softmax_rows(tape.matmul_nt(tape.mul(q, scale), key));
    Tensor mixed =
        tape.add(tape.matmul(tape.matmul(attn, v), params.find(p + "Wo")), params.find(p + "bo"));
    h = tape.add(h, mixed);
    Tensor ff = tape.add(
        tape.matmul(tape.relu(tape.add(tape.matmul(h, params.find(p + "ff.W1")),
                                       params.find(p + "ff.b1"))),
                    params.find(p + "ff.W2")),
        params.find(p + "ff.b2"));
    h = tape.add(h, ff);
  }
  return tape.mean_rows(h);
}

}  // namespace

const char* backbone_name(BackboneKind b) {
  switch (b) {
    case BackboneKind::rnn: return "rnn";
    case BackboneKind::gru: return "gru";
    case BackboneKind::attention: return "attention";
  }
  return "?";
}

BackboneKind parse_backbone(const std::string& name) {
  if (name == "rnn") return BackboneKind::rnn;
  if (name == "gru") return BackboneKind::gru;
  if (name == "attention") return BackboneKind::attention;
  throw InvalidInput("unknown backbone '" + name + "'");
}

const char* head_name(HeadKind h) {
  return h == HeadKind::linear_classifier ? "linear-classifier" : "mlp-regressor";
}

HeadKind parse_head(const std::string& name) {
  if (name == "linear-classifier") return HeadKind::linear_classifier;
  if (name == "mlp-regressor") return HeadKind::mlp_regressor;
  throw InvalidInput("unknown head '" + name + "'");
}

void validate_arch(const ArchConfig& cfg) {
  if (cfg.layers < 1) throw std::invalid_argument("arch: layers must be >= 1");
  if (cfg.hidden_dim < 1) throw std::invalid_argument("arch: hidden_dim must be >= 1");
  if (cfg.input_dim < 1) throw std::invalid_argument("arch: input_dim must be >= 1");
}

const Tensor& ModelParams::find(const std::string& name) const {
  for (const auto& [n, t] : named)
    if (n == name) return t;
  throw StateError("model has no tensor named '" + name + "'");
}

long long ModelParams::parameter_count() const {
  long long total = 0;
  for (const auto& [n, t] : named) total += static_cast<long long>(t->size());
  return total;
}

ModelParams init_model(const ArchConfig& cfg, std::uint64_t seed) {
  validate_arch(cfg);
  Rng rng(seed);
  ModelParams params;
  for (const auto& spec : tensor_specs(cfg)) {
    std::vector<double> values(numel(spec.shape), 0.0);
    if (spec.fan_in > 0) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
      for (auto& v : values) v = rng.uniform(-bound, bound);
    }
    params.named.emplace_back(spec.name,
                              tensor_create(spec.shape, std::move(values), /*requires_grad=*/true));
  }
  return params;
}

Tensor backbone_forward(Tape& tape, const ArchConfig& cfg, const ModelParams& params,
                        const Tensor& x, int length) {
  if (length < 1) throw std::invalid_argument("backbone_forward: length must be >= 1");
  if (x->shape.size() != 2 || x->shape[1] != cfg.input_dim)
    throw ShapeError("backbone_forward: input must be [L," + std::to_string(cfg.input_dim) + "]");
  if (length > x->shape[0])
    throw ShapeError("backbone_forward: length exceeds the input's row count");
  if (cfg.backbone == BackboneKind::attention)
    return attention_forward(tape, cfg, params, x, length);
  return recurrent_forward(tape, cfg, params, x, length);
}

Tensor head_forward(Tape& tape, const ArchConfig& cfg, const ModelParams& params,
                    const Tensor& e) {
  if (e->shape.size() != 2 || e->shape[0] != 1 || e->shape[1] != cfg.hidden_dim)
    throw ShapeError("head_forward: embedding must be [1," + std::to_string(cfg.hidden_dim) + "]");
  if (cfg.head == HeadKind::linear_classifier)
    return tape.add(tape.matmul(e, params.find("head.w")), params.find("head.b"));
  Tensor hidden =
      tape.relu(tape.add(tape.matmul(e, params.find("head.W1")), params.find("head.b1")));
  return tape.add(tape.matmul(hidden, params.find("head.W2")), params.find("head.b2"));
}

double prediction_score(const ArchConfig& cfg, double head_output) {
  if (cfg.head == HeadKind::linear_classifier) {
    // clamp keeps the probability strictly inside (0,1) even when the
    // sigmoid saturates at double precision
    return std::clamp(stable_sigmoid(head_output), 1e-12, 1.0 - 1e-12);
  }
  return head_output;
}

ParamCount count_parameters(const ModelParams& params, const FeaturePrompt* prompt) {
  ParamCount out;
  out.model_count = params.parameter_count();
  out.prompt_count = prompt != nullptr && prompt->v != nullptr
                         ? static_cast<long long>(prompt->v->size())
                         : 0;
  out.ratio = out.model_count > 0
                  ? static_cast<double>(out.prompt_count) / static_cast<double>(out.model_count)
                  : 0.0;
  return out;
}

void save_checkpoint(const ArchConfig& cfg, const ModelParams& params, std::uint64_t seed,
                     const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory '" + dir + "': " + ec.message());
  nlohmann::json manifest;
  manifest["arch"] = detail::arch_to_json(cfg);
  manifest["seed"] = seed;
  auto& tensors = manifest["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < params.named.size(); ++i) {
    const auto& [name, t] = params.named[i];
    const std::string file = "t" + std::to_string(i) + ".f64";
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t->shape;
    entry["file"] = file;
    tensors.push_back(std::move(entry));
    std::ofstream blob(std::filesystem::path(dir) / file, std::ios::binary);
    if (!blob) throw IoError("cannot write checkpoint blob '" + file + "'");
    blob.write(reinterpret_cast<const char*>(t->data.data()),
               static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    if (!blob.good()) throw IoError("failed while writing checkpoint blob '" + file + "'");
  }
  std::ofstream out(std::filesystem::path(dir) / "manifest.json");
  if (!out) throw IoError("cannot write checkpoint manifest in '" + dir + "'");
  out << manifest.dump(2) << "\n";
  if (!out.good()) throw IoError("failed while writing checkpoint manifest");
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream in(std::filesystem::path(dir) / "manifest.json");
  if (!in) throw IoError("cannot open checkpoint manifest in '" + dir + "'");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid checkpoint manifest: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.arch = detail::arch_from_json(manifest.at("arch"));
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Dims>();
      const auto file = entry.at("file").get<std::string>();
      std::ifstream blob(std::filesystem::path(dir) / file, std::ios::binary);
      if (!blob) throw IoError("cannot open checkpoint blob '" + file + "'");
      std::vector<double> values(numel(shape));
      blob.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
      if (blob.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double)))
        throw InvalidInput("checkpoint blob '" + file + "' is shorter than its manifest shape");
      ckpt.params.named.emplace_back(name,
                                     tensor_create(shape, std::move(values), /*requires_grad=*/true));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("checkpoint manifest violates the schema: ") + e.what());
  }
  return ckpt;
}

}  // namespace prompt_impute

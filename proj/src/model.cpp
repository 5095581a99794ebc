#include "sctseg/model.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace sctseg {
namespace {

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::memcpy(out.sample(i), a.sample(i), a.sample_size() * sizeof(float));
    std::memcpy(out.sample(i) + a.sample_size(), b.sample(i), b.sample_size() * sizeof(float));
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& g, int c_first) {
  Tensor ga(g.n, c_first, g.h, g.w);
  Tensor gb(g.n, g.c - c_first, g.h, g.w);
  for (int i = 0; i < g.n; ++i) {
    std::memcpy(ga.sample(i), g.sample(i), ga.sample_size() * sizeof(float));
    std::memcpy(gb.sample(i), g.sample(i) + ga.sample_size(), gb.sample_size() * sizeof(float));
  }
  return {std::move(ga), std::move(gb)};
}

void add_into(Tensor& dst, const Tensor& src) {
  for (size_t p = 0; p < dst.size(); ++p) dst.v[p] += src.v[p];
}

}  // namespace

void validate_model_config(const ModelConfig& cfg) {
  if (cfg.in_channels < 1 || cfg.in_channels % 2 == 0)
    throw ConfigError("model: in_channels must be a positive odd number, got " +
                std::to_string(cfg.in_channels));
  if (cfg.num_classes < 2 || cfg.num_classes > 255)
    throw ConfigError("model: num_classes must be in [2, 255], got " +
                std::to_string(cfg.num_classes));
  if (cfg.depth < 1 || cfg.depth > 8)
    throw ConfigError("model: depth must be in [1, 8], got " + std::to_string(cfg.depth));
  if (cfg.base_width < 1)
    throw ConfigError("model: base_width must be positive, got " + std::to_string(cfg.base_width));
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0)
    throw ConfigError("model: dropout_rate must be in [0, 1)");
  if (cfg.norm_groups < 1)
    throw ConfigError("model: norm_groups must be positive, got " + std::to_string(cfg.norm_groups));
}

SegNet::SegNet(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  validate_model_config(cfg);
  const int d = cfg.depth;
  enc_.reserve(d);
  pool_.resize(d);
  up_.reserve(d);
  dec_.reserve(d);
  for (int i = 0; i < d; ++i) {
    const int in_c = i == 0 ? cfg.in_channels : level_width(i - 1);
    enc_.emplace_back("enc_l" + std::to_string(i), in_c, level_width(i), cfg.norm_groups,
                      cfg.dropout_rate);
  }
  bottleneck_ = ConvBlock("bottleneck", level_width(d - 1), level_width(d), cfg.norm_groups,
                          cfg.dropout_rate);
  for (int j = 0; j < d; ++j) {
    const int level = d - 1 - j;
    up_.emplace_back("up_l" + std::to_string(level), level_width(level + 1), level_width(level),
                     cfg.norm_groups);
    const int dec_in = cfg.skip_connections ? 2 * level_width(level) : level_width(level);
    dec_.emplace_back("dec_l" + std::to_string(level), dec_in, level_width(level),
                      cfg.norm_groups, cfg.dropout_rate);
  }
  head_ = Conv2d("head", cfg.base_width, cfg.num_classes, 1);

  Rng rng(derive_seed(seed, 0x696e6974));
  for (int i = 0; i < d; ++i) enc_[i].init(rng, derive_seed(seed, 0x64726f70, i));
  bottleneck_.init(rng, derive_seed(seed, 0x64726f70, d));
  for (int j = 0; j < d; ++j) {
    up_[j].init(rng);
    dec_[j].init(rng, derive_seed(seed, 0x64726f70, d + 1 + j));
  }
  head_.init_he(rng);
  enc_out_.resize(d);
}

std::vector<std::string> SegNet::feature_names() const {
  std::vector<std::string> names;
  for (int i = 0; i < cfg_.depth; ++i) names.push_back("enc_l" + std::to_string(i));
  names.push_back("bottleneck");
  for (int j = 0; j < cfg_.depth; ++j)
    names.push_back("dec_l" + std::to_string(cfg_.depth - 1 - j));
  return names;
}

void SegNet::set_capture(const std::string& name) {
  if (!name.empty()) {
    const auto names = feature_names();
    if (std::find(names.begin(), names.end(), name) == names.end())
      throw Error("model: unknown feature map '" + name + "'");
  }
  capture_ = name;
}

Tensor SegNet::forward(const Tensor& x, bool train) {
  if (x.c != cfg_.in_channels)
    throw Error("model: input has " + std::to_string(x.c) + " channels, config expects " +
                std::to_string(cfg_.in_channels));
  int h = x.h, w = x.w;
  for (int i = 0; i < cfg_.depth; ++i) {
    if (h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0)
      throw Error("model: spatial size " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                  " does not survive pooling at level " + std::to_string(i) + " (reaches " +
                  std::to_string(h) + "x" + std::to_string(w) + ")");
    h /= 2;
    w /= 2;
  }

  Tensor t = x;
  for (int i = 0; i < cfg_.depth; ++i) {
    t = enc_[i].forward(t, train);
    enc_out_[i] = t;
    if (capture_ == "enc_l" + std::to_string(i)) cap_act_ = t;
    t = pool_[i].forward(t);
  }
  t = bottleneck_.forward(t, train);
  if (capture_ == "bottleneck") cap_act_ = t;
  for (int j = 0; j < cfg_.depth; ++j) {
    const int level = cfg_.depth - 1 - j;
    t = up_[j].forward(t, train);
    if (cfg_.skip_connections) t = concat_channels(t, enc_out_[level]);
    t = dec_[j].forward(t, train);
    if (capture_ == "dec_l" + std::to_string(level)) cap_act_ = t;
  }
  return head_.forward(t, train);
}

Tensor SegNet::backward(const Tensor& dlogits) {
  std::vector<Tensor> skip_grad(cfg_.depth);
  Tensor g = head_.backward(dlogits);
  for (int j = cfg_.depth - 1; j >= 0; --j) {
    const int level = cfg_.depth - 1 - j;
    if (capture_ == "dec_l" + std::to_string(level)) cap_grad_ = g;
    g = dec_[j].backward(g);
    if (cfg_.skip_connections) {
      auto [g_up, g_skip] = split_channels(g, level_width(level));
      skip_grad[level] = std::move(g_skip);
      g = std::move(g_up);
    }
    g = up_[j].backward(g);
  }
  if (capture_ == "bottleneck") cap_grad_ = g;
  g = bottleneck_.backward(g);
  for (int i = cfg_.depth - 1; i >= 0; --i) {
    g = pool_[i].backward(g);
    if (cfg_.skip_connections && skip_grad[i].size() > 0) add_into(g, skip_grad[i]);
    if (capture_ == "enc_l" + std::to_string(i)) cap_grad_ = g;
    g = enc_[i].backward(g);
  }
  return g;
}

std::vector<Param*> SegNet::params() {
  std::vector<Param*> out;
  for (auto& b : enc_) b.collect(out);
  bottleneck_.collect(out);
  for (int j = 0; j < cfg_.depth; ++j) {
    up_[j].collect(out);
    dec_[j].collect(out);
  }
  head_.collect(out);
  return out;
}

size_t SegNet::param_count() const {
  // params() only aggregates pointers; no state changes.
  auto ps = const_cast<SegNet*>(this)->params();
  size_t total = 0;
  for (const Param* p : ps) total += p->size();
  return total;
}

void SegNet::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

Tensor softmax(const Tensor& logits) {
  Tensor probs(logits.n, logits.c, logits.h, logits.w);
  const size_t plane = logits.plane();
  for (int i = 0; i < logits.n; ++i) {
    const float* zs = logits.sample(i);
    float* ps = probs.sample(i);
    for (size_t p = 0; p < plane; ++p) {
      double mx = zs[p];
      for (int k = 1; k < logits.c; ++k) mx = std::max(mx, (double)zs[k * plane + p]);
      double denom = 0.0;
      for (int k = 0; k < logits.c; ++k) denom += std::exp((double)zs[k * plane + p] - mx);
      for (int k = 0; k < logits.c; ++k)
        ps[k * plane + p] = static_cast<float>(std::exp((double)zs[k * plane + p] - mx) / denom);
    }
  }
  return probs;
}

LabelMap argmax_labels(const Tensor& t, int sample) {
  if (t.c > 255) throw Error("argmax_labels: more than 255 classes");
  LabelMap out;
  out.rows = t.h;
  out.cols = t.w;
  out.labels.assign(t.plane(), 0);
  const float* s = t.sample(sample);
  const size_t plane = t.plane();
  for (size_t p = 0; p < plane; ++p) {
    int best = 0;
    float bv = s[p];
    for (int k = 1; k < t.c; ++k) {
      const float v = s[k * plane + p];
      if (v > bv) {  // strict: ties keep the lowest class index
        bv = v;
        best = k;
      }
    }
    out.labels[p] = static_cast<uint8_t>(best);
  }
  return out;
}

// ------------------------------------------------------------ checkpoint

namespace {
constexpr char kMagic[8] = {'S', 'C', 'T', 'S', 'E', 'G', 'C', 'K'};
constexpr uint32_t kVersion = 1;

nlohmann::json model_config_json(const ModelConfig& c) {
  return {{"in_channels", c.in_channels},   {"num_classes", c.num_classes},
          {"depth", c.depth},               {"base_width", c.base_width},
          {"skip_connections", c.skip_connections},
          {"dropout_rate", c.dropout_rate}, {"norm_groups", c.norm_groups}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.depth = j.at("depth").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.skip_connections = j.at("skip_connections").get<bool>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.norm_groups = j.at("norm_groups").get<int>();
  return c;
}
}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  nlohmann::json manifest;
  manifest["config"] = model_config_json(config);
  manifest["stage"] = stage;
  manifest["epoch"] = epoch;
  manifest["seed"] = seed;
  manifest["scalars"] = scalars;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& [name, data] : tensors)
    dir.push_back({{"name", name}, {"size", data.size()}});
  manifest["tensors"] = dir;
  const std::string js = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot write " + path.string());
  out.write(kMagic, 8);
  const uint32_t ver = kVersion;
  out.write(reinterpret_cast<const char*>(&ver), 4);
  const uint64_t jlen = js.size();
  out.write(reinterpret_cast<const char*>(&jlen), 8);
  out.write(js.data(), static_cast<std::streamsize>(js.size()));
  for (const auto& [name, data] : tensors)
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw Error("checkpoint: short write to " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw Error("checkpoint: " + path.string() + " is not a checkpoint file");
  uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), 4);
  if (ver != kVersion)
    throw Error("checkpoint: unsupported version " + std::to_string(ver));
  uint64_t jlen = 0;
  in.read(reinterpret_cast<char*>(&jlen), 8);
  std::string js(jlen, '\0');
  in.read(js.data(), static_cast<std::streamsize>(jlen));
  if (!in) throw Error("checkpoint: truncated manifest in " + path.string());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint: bad manifest: " + std::string(e.what()));
  }
  Checkpoint ck;
  ck.config = model_config_from_json(manifest.at("config"));
  ck.stage = manifest.at("stage").get<int>();
  ck.epoch = manifest.at("epoch").get<int>();
  ck.seed = manifest.at("seed").get<uint64_t>();
  if (manifest.contains("scalars"))
    ck.scalars = manifest.at("scalars").get<std::map<std::string, double>>();
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const size_t size = entry.at("size").get<size_t>();
    std::vector<float> data(size);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(size * sizeof(float)));
    if (!in) throw Error("checkpoint: truncated tensor '" + name + "' in " + path.string());
    ck.tensors.emplace(name, std::move(data));
  }
  return ck;
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
  for (const auto& [name, _] : tensors)
    if (name.rfind(prefix, 0) == 0) return true;
  return false;
}

void store_params(Checkpoint& ck, SegNet& model, const std::string& prefix) {
  for (Param* p : model.params()) ck.tensors[prefix + p->name] = p->value;
}

void load_params(const Checkpoint& ck, SegNet& model, const std::string& prefix) {
  for (Param* p : model.params()) {
    const auto it = ck.tensors.find(prefix + p->name);
    if (it == ck.tensors.end())
      throw Error("checkpoint: missing tensor '" + prefix + p->name + "'");
    if (it->second.size() != p->size())
      throw Error("checkpoint: tensor '" + prefix + p->name + "' has " +
                  std::to_string(it->second.size()) + " values, model expects " +
                  std::to_string(p->size()));
    p->value = it->second;
  }
}

}  // namespace sctseg

#include "mpcnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "mpcnn/errors.hpp"

namespace mpcnn {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'P', 'C', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) fail(ErrorKind::InvalidParameter, std::string(what) + " too large for a checkpoint");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      fail(ErrorKind::CorruptCheckpoint, std::string("truncated checkpoint while reading ") + what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    const auto s = take(4, what);
    return static_cast<std::uint32_t>(s[0]) | static_cast<std::uint32_t>(s[1]) << 8 |
           static_cast<std::uint32_t>(s[2]) << 16 | static_cast<std::uint32_t>(s[3]) << 24;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

json config_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"val_freq", c.val_freq},
          {"crop", c.crop},
          {"seed", c.seed},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"lr_decay", c.lr_decay},
          {"min_improvement", c.min_improvement},
          {"patience", c.patience},
          {"workers", c.workers},
          {"augment", c.augment},
          {"mean_mode", c.mean_mode == MeanMode::PerPosition ? "per_position" : "global_scalar"}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size");
  c.epochs = j.at("epochs");
  c.val_freq = j.at("val_freq");
  c.crop = j.at("crop");
  c.seed = j.at("seed");
  c.learning_rate = j.at("learning_rate");
  c.momentum = j.at("momentum");
  c.weight_decay = j.at("weight_decay");
  c.lr_decay = j.at("lr_decay");
  c.min_improvement = j.at("min_improvement");
  c.patience = j.at("patience");
  c.workers = j.at("workers");
  c.augment = j.at("augment");
  const std::string mode = j.at("mean_mode");
  if (mode != "per_position" && mode != "global_scalar") fail(ErrorKind::CorruptCheckpoint, "unknown mean mode");
  c.mean_mode = mode == "per_position" ? MeanMode::PerPosition : MeanMode::GlobalScalar;
  return c;
}

json state_json(const TrainState& s) {
  json metrics = json::array();
  for (const auto& r : s.metrics)
    metrics.push_back({{"epoch", r.epoch}, {"batch", r.batch}, {"split", r.split}, {"loss", r.loss},
                       {"top1_error", r.top1_error}, {"top5_error", r.top5_error}});
  return {{"epoch", s.epoch},
          {"batch", s.batch},
          {"validations", s.validations},
          {"window", {s.window_loss, s.window_top1, s.window_top5, s.window_samples}},
          {"scheduler",
           {{"learning_rate", s.scheduler.learning_rate},
            {"patience", s.scheduler.patience},
            {"min_improvement", s.scheduler.min_improvement},
            {"decay", s.scheduler.decay},
            {"since_decay", s.scheduler.since_decay}}},
          {"metrics", metrics}};
}

TrainState state_from(const json& j) {
  TrainState s;
  s.epoch = j.at("epoch");
  s.batch = j.at("batch");
  s.validations = j.at("validations");
  const auto& w = j.at("window");
  if (!w.is_array() || w.size() != 4) fail(ErrorKind::CorruptCheckpoint, "bad window record");
  s.window_loss = w[0];
  s.window_top1 = w[1];
  s.window_top5 = w[2];
  s.window_samples = w[3];
  const auto& sc = j.at("scheduler");
  s.scheduler.learning_rate = sc.at("learning_rate");
  s.scheduler.patience = sc.at("patience");
  s.scheduler.min_improvement = sc.at("min_improvement");
  s.scheduler.decay = sc.at("decay");
  s.scheduler.since_decay = sc.at("since_decay").get<std::vector<double>>();
  for (const auto& r : j.at("metrics"))
    s.metrics.push_back({r.at("epoch"), r.at("batch"), r.at("split"), r.at("loss"), r.at("top1_error"),
                         r.at("top5_error")});
  return s;
}

void put_tensor(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& t) {
  put_u32(out, checked_u32(name.size(), "tensor name"));
  out.insert(out.end(), name.begin(), name.end());
  put_u32(out, checked_u32(t.rank(), "tensor rank"));
  for (auto d : t.shape()) put_u32(out, checked_u32(d, "tensor dimension"));
  const auto* p = reinterpret_cast<const std::uint8_t*>(t.ptr());
  out.insert(out.end(), p, p + t.size() * sizeof(float));
}

std::pair<std::string, Tensor> get_tensor(Reader& in) {
  const auto name_len = in.u32("tensor name length");
  const auto name_bytes = in.take(name_len, "tensor name");
  std::string name(name_bytes.begin(), name_bytes.end());
  const auto rank = in.u32("tensor rank");
  if (rank == 0 || rank > 8) fail(ErrorKind::CorruptCheckpoint, "tensor '" + name + "' has implausible rank");
  Shape shape(rank);
  std::size_t volume = 1;
  for (auto& d : shape) {
    d = in.u32("tensor dimension");
    if (d == 0) fail(ErrorKind::CorruptCheckpoint, "tensor '" + name + "' has a zero dimension");
    volume *= d;
    if (volume > (std::size_t{1} << 34)) fail(ErrorKind::CorruptCheckpoint, "tensor '" + name + "' too large");
  }
  const auto data = in.take(volume * sizeof(float), "tensor data");
  Tensor t(shape);
  std::memcpy(t.ptr(), data.data(), data.size());
  return {std::move(name), std::move(t)};
}

}  // namespace

Checkpoint make_checkpoint(const Network<float>& net) {
  Checkpoint c;
  c.spec = net.spec();
  c.names = net.param_names();
  c.params = net.params();
  c.config.crop = net.spec().input_size;
  return c;
}

Checkpoint make_checkpoint(const Trainer& trainer) {
  Checkpoint c = make_checkpoint(trainer.network());
  c.velocity = trainer.optimizer().velocity;
  c.config = trainer.config();
  c.state = trainer.state();
  c.source_mean = trainer.means().source;
  c.bilateral_mean = trainer.means().bilateral;
  return c;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.names.size() != ckpt.params.size()) fail(ErrorKind::InvalidState, "checkpoint names/params mismatch");
  if (!ckpt.velocity.empty() && ckpt.velocity.size() != ckpt.params.size())
    fail(ErrorKind::InvalidState, "checkpoint velocity/params mismatch");
  const std::size_t count = ckpt.params.size() + ckpt.velocity.size() + (ckpt.source_mean ? 1 : 0) +
                            (ckpt.bilateral_mean ? 1 : 0);
  const json header{{"architecture", json::parse(spec_to_json(ckpt.spec))},
                    {"config", config_json(ckpt.config)},
                    {"state", state_json(ckpt.state)},
                    {"tensors", count}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, checked_u32(text.size(), "checkpoint header"));
  out.insert(out.end(), text.begin(), text.end());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) put_tensor(out, ckpt.names[i], ckpt.params[i]);
  for (std::size_t i = 0; i < ckpt.velocity.size(); ++i) put_tensor(out, "velocity/" + ckpt.names[i], ckpt.velocity[i]);
  if (ckpt.source_mean) put_tensor(out, "mean/source", ckpt.source_mean->values);
  if (ckpt.bilateral_mean) put_tensor(out, "mean/bilateral", ckpt.bilateral_mean->values);
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto magic = in.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) fail(ErrorKind::CorruptCheckpoint, "not a checkpoint (bad magic)");
  const auto version = in.u32("version");
  if (version != kCheckpointVersion)
    fail(ErrorKind::UnsupportedVersion, "checkpoint version " + std::to_string(version) + ", expected " +
                                            std::to_string(kCheckpointVersion));
  const auto header_len = in.u32("header length");
  const auto header_bytes = in.take(header_len, "header");

  Checkpoint c;
  std::size_t count = 0;
  try {
    const auto header = json::parse(header_bytes.begin(), header_bytes.end());
    c.spec = spec_from_json(header.at("architecture").dump());
    c.config = config_from(header.at("config"));
    c.state = state_from(header.at("state"));
    count = header.at("tensors");
  } catch (const json::exception& e) {
    fail(ErrorKind::CorruptCheckpoint, std::string("checkpoint header: ") + e.what());
  }

  for (std::size_t i = 0; i < count; ++i) {
    auto [name, t] = get_tensor(in);
    if (name.rfind("velocity/", 0) == 0) {
      c.velocity.push_back(std::move(t));
    } else if (name == "mean/source") {
      c.source_mean = MeanImage{std::move(t)};
    } else if (name == "mean/bilateral") {
      c.bilateral_mean = MeanImage{std::move(t)};
    } else {
      c.names.push_back(std::move(name));
      c.params.push_back(std::move(t));
    }
  }
  if (!in.done()) fail(ErrorKind::CorruptCheckpoint, "trailing bytes after the last tensor");
  if (!c.velocity.empty() && c.velocity.size() != c.params.size())
    fail(ErrorKind::CorruptCheckpoint, "velocity count does not match parameter count");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::PersistedState, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      fail(ErrorKind::PersistedState, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::PersistedState, "cannot move " + tmp.string() + " into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

void restore_network(Network<float>& net, const Checkpoint& ckpt) {
  if (!(ckpt.spec == net.spec())) {
    std::string why = "checkpoint architecture differs from the network";
    if (ckpt.spec.paths.size() != net.spec().paths.size())
      why += " (" + std::to_string(ckpt.spec.paths.size()) + " paths vs " + std::to_string(net.spec().paths.size()) + ")";
    else if (ckpt.spec.n_classes != net.spec().n_classes)
      why += " (" + std::to_string(ckpt.spec.n_classes) + " classes vs " + std::to_string(net.spec().n_classes) + ")";
    fail(ErrorKind::ArchitectureMismatch, why);
  }
  if (ckpt.names != net.param_names()) fail(ErrorKind::ArchitectureMismatch, "checkpoint parameter names differ");
  for (std::size_t i = 0; i < ckpt.params.size(); ++i)
    if (ckpt.params[i].shape() != net.params()[i].shape())
      fail(ErrorKind::ArchitectureMismatch, "shape of " + ckpt.names[i] + " differs");
  net.params() = ckpt.params;
}

Network<float> network_from_checkpoint(const Checkpoint& ckpt) {
  Network<float> net(ckpt.spec, 0);
  restore_network(net, ckpt);
  return net;
}

void restore_trainer(Trainer& trainer, const Checkpoint& ckpt) {
  if (!ckpt.velocity.empty()) {
    const auto& params = trainer.network().params();
    for (std::size_t i = 0; i < ckpt.velocity.size(); ++i)
      if (ckpt.velocity[i].shape() != params[i].shape())
        fail(ErrorKind::ArchitectureMismatch, "velocity shape of " + ckpt.names[i] + " differs");
  }
  trainer.optimizer().velocity = ckpt.velocity;
  trainer.state() = ckpt.state;
}

DatasetMeans checkpoint_means(const Checkpoint& ckpt) {
  if (!ckpt.source_mean) fail(ErrorKind::CorruptCheckpoint, "checkpoint carries no mean image");
  return {*ckpt.source_mean, ckpt.bilateral_mean};
}

}  // namespace mpcnn

#include "mpcnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mpcnn/errors.hpp"
#include "mpcnn/parallel.hpp"
#include "mpcnn/random.hpp"

namespace mpcnn {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kShuffle = 1, kAugment = 2, kDropout = 3;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void validate(const TrainConfig& cfg) {
  const auto bad = [](const std::string& what) { fail(ErrorKind::InvalidParameter, what); };
  if (cfg.batch_size < 1) bad("batch size must be at least 1");
  if (cfg.val_freq < 1) bad("validation frequency must be at least 1");
  if (cfg.crop < 1) bad("crop must be positive");
  if (!(cfg.learning_rate >= 0.0)) bad("learning rate must be non-negative");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) bad("momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0.0)) bad("weight decay must be non-negative");
  if (!(cfg.lr_decay > 0.0 && cfg.lr_decay < 1.0)) bad("lr decay factor must lie in (0, 1)");
  if (!(cfg.min_improvement >= 0.0)) bad("minimum improvement must be non-negative");
  if (cfg.patience < 1) bad("patience must be at least 1");
  if (cfg.workers < 1) bad("workers must be at least 1");
}

CsvTable metrics_table(std::span<const MetricsRow> rows) {
  CsvTable t;
  t.header = {"epoch", "batch", "split", "loss", "top1_error", "top5_error"};
  for (const auto& r : rows)
    t.rows.push_back({std::to_string(r.epoch), std::to_string(r.batch), r.split, format_double(r.loss),
                      format_double(r.top1_error), format_double(r.top5_error)});
  return t;
}

// --- plateau ----------------------------------------------------------------------------

double lr_plateau_step(std::span<const double> history, double current_lr, std::size_t patience,
                       double min_improvement, double decay) {
  if (patience < 1) fail(ErrorKind::InvalidParameter, "patience must be at least 1");
  if (history.size() < patience) return current_lr;
  const std::size_t window_start = history.size() - patience;
  double reference;
  std::size_t first_candidate;
  if (window_start > 0) {
    reference = *std::min_element(history.begin(), history.begin() + static_cast<std::ptrdiff_t>(window_start));
    first_candidate = window_start;
  } else {
    reference = history[0];
    first_candidate = 1;
  }
  for (std::size_t i = first_candidate; i < history.size(); ++i)
    if (history[i] < reference - min_improvement) return current_lr;
  return current_lr * decay;
}

double PlateauScheduler::observe(double val_error) {
  since_decay.push_back(val_error);
  const double next = lr_plateau_step(since_decay, learning_rate, patience, min_improvement, decay);
  if (next != learning_rate) {
    learning_rate = next;
    since_decay.clear();
  }
  return learning_rate;
}

// --- image sets -------------------------------------------------------------------------

MemoryImageSet::MemoryImageSet(std::vector<ImageU8> source, std::vector<int> labels, std::vector<ImageU8> bilateral)
    : source_(std::move(source)), labels_(std::move(labels)), bilateral_(std::move(bilateral)) {
  if (source_.size() != labels_.size()) fail(ErrorKind::InvalidParameter, "images and labels differ in count");
  if (!bilateral_.empty() && bilateral_.size() != source_.size())
    fail(ErrorKind::InvalidParameter, "bilateral images and source images differ in count");
}

ImageU8 MemoryImageSet::bilateral(std::size_t i) const {
  if (bilateral_.empty()) fail(ErrorKind::InvalidState, "image set has no bilateral versions");
  return bilateral_.at(i);
}

ManifestImageSet::ManifestImageSet(std::vector<ManifestEntry> entries, std::size_t image_size,
                                   BilateralParams bilateral)
    : entries_(std::move(entries)), image_size_(image_size), bilateral_(bilateral) {}

ImageU8 ManifestImageSet::source(std::size_t i) const {
  return canonicalize(read_image(entries_.at(i).path), image_size_);
}

ImageU8 ManifestImageSet::bilateral(std::size_t i) const {
  const auto& e = entries_.at(i);
  if (!e.bilateral_path.empty()) return canonicalize(read_image(e.bilateral_path), image_size_);
  return bilateral_filter(source(i), bilateral_);
}

DatasetMeans compute_means(const ImageSet& set, bool with_bilateral, MeanMode mode) {
  MeanAccumulator src, bil;
  for (std::size_t i = 0; i < set.size(); ++i) {
    src.add(set.source(i));
    if (with_bilateral) bil.add(set.bilateral(i));
  }
  DatasetMeans m{src.finish(mode), std::nullopt};
  if (with_bilateral) m.bilateral = bil.finish(mode);
  return m;
}

bool uses_bilateral(const NetworkSpec& spec) {
  return std::any_of(spec.paths.begin(), spec.paths.end(),
                     [](const PathSpec& p) { return p.input == InputTransform::Bilateral; });
}

Batch<float> assemble_batch(const ImageSet& set, std::span<const std::size_t> indices, const DatasetMeans& means,
                            bool with_bilateral, const CropPolicy& policy, std::size_t workers) {
  if (indices.empty()) fail(ErrorKind::EmptyDataset, "empty batch");
  if (with_bilateral && !means.bilateral) fail(ErrorKind::InvalidState, "bilateral mean missing");
  const std::size_t n = indices.size(), c = policy.crop;
  const std::size_t plane = 3 * c * c;
  Batch<float> batch;
  batch.source = Tensor({n, 3, c, c});
  if (with_bilateral) batch.bilateral = Tensor({n, 3, c, c});
  batch.labels.resize(n);
  parallel_for(n, workers, [&](std::size_t pos) {
    const std::size_t idx = indices[pos];
    const auto src = subtract_mean(set.source(idx), means.source);
    const std::size_t size = src.dim(0);
    CropWindow window;
    if (policy.augment) {
      Rng rng(derive_seed(policy.seed, {pos}));
      window = draw_augmentation(size, c, rng);
    } else {
      window = center_window(size, c);
    }
    const auto s = extract_crop(src, window, c);
    std::copy(s.data().begin(), s.data().end(), batch.source.data().begin() + static_cast<std::ptrdiff_t>(pos * plane));
    if (with_bilateral) {
      const auto b = extract_crop(subtract_mean(set.bilateral(idx), *means.bilateral), window, c);
      std::copy(b.data().begin(), b.data().end(),
                batch.bilateral.data().begin() + static_cast<std::ptrdiff_t>(pos * plane));
    }
    batch.labels[pos] = set.label(idx);
  });
  return batch;
}

EvalResult evaluate(Network<float>& net, const ImageSet& set, const DatasetMeans& means, std::size_t crop,
                    std::size_t batch_size, std::size_t workers) {
  if (set.size() == 0) fail(ErrorKind::EmptyDataset, "evaluation set is empty");
  if (batch_size < 1) fail(ErrorKind::InvalidParameter, "batch size must be at least 1");
  const bool bil = uses_bilateral(net.spec());
  EvalResult r;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    idx.resize(std::min(batch_size, set.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto batch = assemble_batch(set, idx, means, bil, {crop, false, 0}, workers);
    for (int l : batch.labels)
      if (l < 0 || static_cast<std::size_t>(l) >= net.spec().n_classes)
        fail(ErrorKind::InvalidLabel, "label " + std::to_string(l) + " outside the network's classes");
    const auto out = net.forward(batch, Mode::Infer);
    const double n = static_cast<double>(idx.size());
    r.loss += out.loss * n;
    r.top1_error += topk_error(out.probs, batch.labels, 1) * n;
    r.top5_error += topk_error(out.probs, batch.labels, 5) * n;
    r.count += idx.size();
  }
  const double total = static_cast<double>(r.count);
  r.loss /= total;
  r.top1_error /= total;
  r.top5_error /= total;
  return r;
}

// --- trainer ----------------------------------------------------------------------------

Trainer::Trainer(Network<float>& net, const ImageSet& train, const ImageSet* val, TrainConfig cfg, DatasetMeans means)
    : net_(net), train_(train), val_(val), cfg_(cfg), means_(std::move(means)), bilateral_(uses_bilateral(net.spec())) {
  validate(cfg_);
  if (train_.size() == 0) fail(ErrorKind::EmptyDataset, "training set is empty");
  if (cfg_.crop != net_.spec().input_size)
    fail(ErrorKind::InvalidParameter, "crop " + std::to_string(cfg_.crop) + " does not match the network input " +
                                          std::to_string(net_.spec().input_size));
  if (bilateral_ && !means_.bilateral) fail(ErrorKind::InvalidState, "two-path training needs a bilateral mean");
  validate_labels();
  state_.scheduler = {cfg_.learning_rate, cfg_.patience, cfg_.min_improvement, cfg_.lr_decay, {}};
  sgd_.learning_rate = cfg_.learning_rate;
  sgd_.momentum = cfg_.momentum;
  sgd_.weight_decay = cfg_.weight_decay;
}

void Trainer::validate_labels() const {
  const auto check = [&](const ImageSet& set, const char* which) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      const int l = set.label(i);
      if (l < 0 || static_cast<std::size_t>(l) >= net_.spec().n_classes)
        fail(ErrorKind::InvalidLabel, std::string(which) + " label " + std::to_string(l) + " outside [0, " +
                                          std::to_string(net_.spec().n_classes) + ")");
    }
  };
  check(train_, "training");
  if (val_) check(*val_, "validation");
}

void Trainer::record_validation() {
  const std::size_t epoch = state_.epoch + 1;
  if (state_.window_samples > 0) {
    const double n = static_cast<double>(state_.window_samples);
    state_.metrics.push_back({epoch, state_.batch, "train", state_.window_loss / n, state_.window_top1 / n,
                              state_.window_top5 / n});
  }
  state_.window_loss = state_.window_top1 = state_.window_top5 = 0;
  state_.window_samples = 0;
  if (!val_ || val_->size() == 0) return;

  // Validation batches walk through the set in order, wrapping around.
  const std::size_t n = std::min(cfg_.batch_size, val_->size());
  std::vector<std::size_t> idx(n);
  const std::size_t start = (state_.validations * cfg_.batch_size) % val_->size();
  for (std::size_t i = 0; i < n; ++i) idx[i] = (start + i) % val_->size();
  ++state_.validations;
  const auto batch = assemble_batch(*val_, idx, means_, bilateral_, {cfg_.crop, false, 0}, cfg_.workers);
  const auto out = net_.forward(batch, Mode::Infer);
  const MetricsRow row{epoch, state_.batch, "val", out.loss, topk_error(out.probs, batch.labels, 1),
                       topk_error(out.probs, batch.labels, 5)};
  state_.metrics.push_back(row);
  sgd_.learning_rate = state_.scheduler.observe(row.top1_error);
}

double Trainer::run_epoch() {
  const std::size_t epoch = state_.epoch;
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg_.seed, {kShuffle, epoch}));
  shuffle_rng.shuffle(order.begin(), order.end());

  sgd_.learning_rate = state_.scheduler.learning_rate;
  double loss_sum = 0;
  std::size_t batches = 0;
  for (std::size_t start = 0, b = 0; start < order.size(); start += cfg_.batch_size, ++b) {
    const std::span<const std::size_t> idx(order.data() + start, std::min(cfg_.batch_size, order.size() - start));
    const CropPolicy policy{cfg_.crop, cfg_.augment, derive_seed(cfg_.seed, {kAugment, epoch, b})};
    const auto batch = assemble_batch(train_, idx, means_, bilateral_, policy, cfg_.workers);
    const auto out = net_.forward(batch, Mode::Train, derive_seed(cfg_.seed, {kDropout, state_.batch}));
    net_.backward_and_step(sgd_);
    ++state_.batch;

    const double n = static_cast<double>(idx.size());
    state_.window_loss += out.loss * n;
    state_.window_top1 += topk_error(out.probs, batch.labels, 1) * n;
    state_.window_top5 += topk_error(out.probs, batch.labels, 5) * n;
    state_.window_samples += idx.size();
    batch_losses_.push_back(out.loss);
    loss_sum += out.loss;
    ++batches;

    if (state_.batch % cfg_.val_freq == 0) record_validation();
  }
  ++state_.epoch;
  return loss_sum / static_cast<double>(batches);
}

void Trainer::run(const std::function<void(Trainer&)>& on_epoch_end) {
  while (state_.epoch < cfg_.epochs) {
    run_epoch();
    if (on_epoch_end) on_epoch_end(*this);
  }
}

}  // namespace mpcnn

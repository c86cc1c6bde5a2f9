#include "mpcnn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "mpcnn/checkpoint.hpp"
#include "mpcnn/complexity.hpp"
#include "mpcnn/errors.hpp"
#include "mpcnn/gradcheck.hpp"
#include "mpcnn/inspect.hpp"
#include "mpcnn/manifest.hpp"
#include "mpcnn/parallel.hpp"
#include "mpcnn/synthetic.hpp"
#include "mpcnn/training.hpp"

namespace fs = std::filesystem;

namespace mpcnn::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Config-file arguments go right after the subcommand name, ahead of the
// user's own flags; every option keeps its last value, so flags win.
std::vector<std::string> with_config(std::vector<std::string> args, const std::set<std::string>& subcommands) {
  std::size_t sub = 0;
  for (std::size_t i = 1; i < args.size(); ++i)
    if (subcommands.count(args[i])) {
      sub = i;
      break;
    }
  std::string file;
  for (std::size_t i = sub + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) file = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
  }
  if (file.empty()) return args;
  const auto extra = config_file_args(file);
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub + 1), extra.begin(), extra.end());
  return args;
}

std::string resolved_config(const CLI::App& sc) {
  std::istringstream lines(sc.config_to_str(true, false));
  std::string out = "# mpcnn " + sc.get_name() + "\n", line;
  while (std::getline(lines, line))
    if (!line.empty()) out += "# " + line + "\n";
  return out;
}

// Path as written into an output manifest: relative to that manifest's directory.
std::string rebase(const fs::path& p, const fs::path& out_file) {
  const auto dir = fs::absolute(out_file).parent_path().lexically_normal();
  return fs::absolute(p).lexically_normal().lexically_proximate(dir).generic_string();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

void write_output(const fs::path& path, const CsvTable& t, std::string_view preamble = {}) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  write_csv(path, t, preamble);
}

std::vector<std::size_t> complexity_scores(const std::vector<ManifestEntry>& entries, std::size_t image_size,
                                           std::size_t workers) {
  std::vector<std::size_t> c(entries.size());
  parallel_for(entries.size(), workers,
               [&](std::size_t i) { c[i] = image_complexity(canonicalize(read_image(entries[i].path), image_size)); });
  return c;
}

MeanMode parse_mean_mode(const std::string& s) { return s == "global" ? MeanMode::GlobalScalar : MeanMode::PerPosition; }

NetworkSpec build_spec(const std::string& arch, std::size_t classes, std::size_t paths, std::size_t crop,
                       double dropout) {
  auto spec = arch == "compact" ? build_compact_architecture(classes, paths, crop)
                                : build_paper_architecture(classes, paths, crop);
  spec.dropout = dropout;
  return spec;
}

MeanImage zero_mean(std::size_t size) {
  MeanImage m;
  m.values = Tensor({size, size, 3});
  return m;
}

// Shared by featmaps and filters: a trained net from a checkpoint, or a fresh one.
struct NetChoice {
  std::string checkpoint;
  std::string arch = "full";
  std::size_t paths = 2;
  std::size_t classes = 100;
  std::size_t crop = 227;
  std::uint64_t seed = 42;

  void add(CLI::App* sc) {
    sc->add_option("--checkpoint", checkpoint, "Trained checkpoint; without it a freshly initialized net is used");
    sc->add_option("--arch", arch, "Architecture of the fresh net")->check(CLI::IsMember({"full", "compact"}));
    sc->add_option("--paths", paths, "Paths of the fresh net")->check(CLI::Range(1, 2));
    sc->add_option("--classes", classes, "Classes of the fresh net")->check(CLI::PositiveNumber);
    sc->add_option("--crop", crop, "Input size of the fresh net")->check(CLI::PositiveNumber);
    sc->add_option("--seed", seed, "Initialization seed of the fresh net");
  }

  std::pair<Network<float>, std::optional<DatasetMeans>> load() const {
    if (!checkpoint.empty()) {
      const auto ck = load_checkpoint(checkpoint);
      std::optional<DatasetMeans> means;
      if (ck.source_mean) means = checkpoint_means(ck);
      return {network_from_checkpoint(ck), means};
    }
    return {Network<float>(build_spec(arch, classes, paths, crop, 0.5), seed), std::nullopt};
  }
};

struct BilateralFlags {
  BilateralParams p;
  void add(CLI::App* sc) {
    sc->add_option("--half-kernel", p.half_kernel, "Bilateral window half-width")->check(CLI::PositiveNumber);
    sc->add_option("--sigma-spatial", p.sigma_spatial, "Bilateral spatial sigma (pixels)")->check(CLI::PositiveNumber);
    sc->add_option("--sigma-range", p.sigma_range, "Bilateral range sigma ([0,1] intensity)")->check(CLI::PositiveNumber);
  }
};

// --- subcommands -------------------------------------------------------------------

struct ScoreCmd {
  std::string manifest, out;
  std::size_t image_size = kCanonicalSize, workers = 1;

  int operator()(std::ostream& log) const {
    const auto m = load_manifest(manifest);
    const auto c = complexity_scores(m.entries, image_size, workers);
    CsvTable t;
    t.header = {"path", "label", "C"};
    for (std::size_t i = 0; i < c.size(); ++i)
      t.rows.push_back({rebase(m.entries[i].path, out), std::to_string(m.entries[i].label), std::to_string(c[i])});
    write_output(out, t);
    log << "scored " << c.size() << " images -> " << out << "\n";
    return kExitOk;
  }
};

struct SplitCmd {
  std::string manifest, out, oversample_dir;
  std::size_t groups = 4, per_group = 0, val_per_group = 0, oversample_to = 0, image_size = kCanonicalSize, workers = 1;
  std::uint64_t seed = 42;

  int operator()(std::ostream& log) const {
    const auto m = load_manifest(manifest);
    const auto c = complexity_scores(m.entries, image_size, workers);
    std::vector<int> group(m.entries.size(), 0);
    for (const std::string split : {"train", "val"}) {
      std::vector<std::size_t> members;
      std::vector<ComplexityScore> scores;
      std::map<int, std::size_t> class_count;
      for (std::size_t i = 0; i < m.entries.size(); ++i)
        if (m.entries[i].split == split) {
          scores.push_back({members.size(), m.entries[i].label, c[i]});
          members.push_back(i);
          ++class_count[m.entries[i].label];
        }
      if (members.empty()) continue;
      std::size_t per = split == "train" ? per_group : val_per_group;
      if (per == 0) {
        std::size_t smallest = SIZE_MAX;
        for (const auto& [label, n] : class_count) smallest = std::min(smallest, n);
        per = smallest / groups;
      }
      const auto a = partition_groups(scores, groups, per);
      for (std::size_t k = 0; k < members.size(); ++k) group[members[k]] = a.group[k];
    }

    CsvTable t;
    t.header = m.table.header;
    const std::size_t path_col = t.column("path");
    const auto existing_group = t.find_column("group");
    const std::size_t group_col = existing_group ? *existing_group : t.add_column("group");
    const auto bil_col = t.find_column("bilateral_path");
    auto emit = [&](const ManifestEntry& e, int g, const fs::path& path) {
      auto row = m.table.rows[e.row];
      row.resize(t.header.size());
      row[path_col] = rebase(path, out);
      if (bil_col && !e.bilateral_path.empty()) row[*bil_col] = rebase(e.bilateral_path, out);
      row[group_col] = std::to_string(g);
      t.rows.push_back(std::move(row));
    };
    std::map<std::pair<int, int>, std::vector<std::size_t>> train_members;  // (group, label) -> entries
    std::size_t kept = 0;
    for (std::size_t i = 0; i < m.entries.size(); ++i)
      if (group[i] > 0) {
        emit(m.entries[i], group[i], m.entries[i].path);
        ++kept;
        if (m.entries[i].split == "train") train_members[{group[i], m.entries[i].label}].push_back(i);
      }

    std::size_t added = 0;
    if (oversample_to > 0) {
      if (!oversample_dir.empty()) ensure_dir(oversample_dir);
      for (const auto& [key, items] : train_members) {
        if (items.size() >= oversample_to) continue;
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(key.first), static_cast<std::uint64_t>(key.second)}));
        const auto picks = oversample_choices(items.size(), oversample_to, rng);
        for (std::size_t k = 0; k < picks.size(); ++k) {
          const auto& e = m.entries[items[picks[k]]];
          fs::path path = e.path;
          if (!oversample_dir.empty()) {
            char name[64];
            std::snprintf(name, sizeof name, "g%d_c%d_%04zu.png", key.first, key.second, k);
            path = fs::path(oversample_dir) / name;
            write_png(path, flip_horizontal(canonicalize(read_image(e.path), image_size)));
          }
          auto copy = e;
          copy.bilateral_path.clear();  // the flipped copy has no cached filter output
          emit(copy, key.first, path);
          if (bil_col) t.rows.back()[*bil_col].clear();
          ++added;
        }
      }
    }
    write_output(out, t);
    log << "kept " << kept << " of " << m.entries.size() << " rows in " << groups << " groups";
    if (added) log << ", added " << added << " oversampled rows";
    log << " -> " << out << "\n";
    return kExitOk;
  }
};

struct BilateralCmd {
  std::string manifest, out, out_dir;
  std::size_t image_size = kCanonicalSize, workers = 1;
  BilateralFlags bf;

  int operator()(std::ostream& log) const {
    const auto m = load_manifest(manifest);
    ensure_dir(out_dir);
    std::vector<fs::path> written(m.entries.size());
    parallel_for(m.entries.size(), workers, [&](std::size_t i) {
      const auto& e = m.entries[i];
      char prefix[32];
      std::snprintf(prefix, sizeof prefix, "%06zu_", e.row);
      written[i] = fs::path(out_dir) / (prefix + e.path.stem().string() + ".png");
      write_png(written[i], bilateral_filter(canonicalize(read_image(e.path), image_size), bf.p));
    });
    CsvTable t;
    t.header = m.table.header;
    const std::size_t path_col = t.column("path");
    const auto existing_bil = t.find_column("bilateral_path");
    const std::size_t bil_col = existing_bil ? *existing_bil : t.add_column("bilateral_path");
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      auto row = m.table.rows[m.entries[i].row];
      row.resize(t.header.size());
      row[path_col] = rebase(m.entries[i].path, out);
      row[bil_col] = rebase(written[i], out);
      t.rows.push_back(std::move(row));
    }
    write_output(out, t);
    log << "filtered " << written.size() << " images into " << out_dir << " -> " << out << "\n";
    return kExitOk;
  }
};

struct TrainCmd {
  std::string manifest, out_dir, arch = "full", mean_mode = "per-position", resume;
  int group = 0;
  std::size_t paths = 2, classes = 100, image_size = kCanonicalSize;
  double dropout = 0.5;
  TrainConfig cfg;
  BilateralFlags bf;

  int operator()(std::ostream& log, const std::string& config_echo) {
    cfg.mean_mode = parse_mean_mode(mean_mode);
    validate(cfg);
    const auto m = load_manifest(manifest);
    const auto train_entries = m.select("train", group), val_entries = m.select("val", group);
    if (train_entries.empty()) fail(ErrorKind::EmptyDataset, "no training rows in " + manifest);
    ManifestImageSet train(train_entries, image_size, bf.p), val(val_entries, image_size, bf.p);

    const auto spec = build_spec(arch, classes, paths, cfg.crop, dropout);
    ensure_dir(out_dir);
    const fs::path dir(out_dir), ckpt_path = dir / "model.ckpt", metrics_path = dir / "metrics.csv";

    std::optional<Checkpoint> ck;
    DatasetMeans means;
    if (!resume.empty()) {
      ck = load_checkpoint(resume);
      means = checkpoint_means(*ck);
    } else {
      log << "computing means over " << train.size() << " images\n";
      means = compute_means(train, uses_bilateral(spec), cfg.mean_mode);
    }
    save_mean(means.source, dir / "mean_source.ppm", dir / "mean_source.txt");
    if (means.bilateral) save_mean(*means.bilateral, dir / "mean_bilateral.ppm", dir / "mean_bilateral.txt");

    Network<float> net(spec, derive_seed(cfg.seed, {0}));
    if (ck) restore_network(net, *ck);
    Trainer trainer(net, train, val.size() ? &val : nullptr, cfg, means);
    if (ck) {
      restore_trainer(trainer, *ck);
      log << "resumed at epoch " << trainer.state().epoch << ", batch " << trainer.state().batch << "\n";
    }
    const auto write_outputs = [&](const Trainer& t) {
      save_checkpoint(make_checkpoint(t), ckpt_path);
      write_csv(metrics_path, metrics_table(t.state().metrics), config_echo);
    };
    write_outputs(trainer);
    trainer.run([&](Trainer& t) {
      write_outputs(t);
      const auto& s = t.state();
      std::size_t from = t.batch_losses().size();
      double sum = 0;
      const std::size_t per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
      for (std::size_t i = from - std::min(from, per_epoch); i < from; ++i) sum += t.batch_losses()[i];
      char line[160];
      std::snprintf(line, sizeof line, "epoch %zu/%zu: batches %zu, mean train loss %.4f, lr %g\n", s.epoch,
                    cfg.epochs, s.batch, sum / static_cast<double>(std::min(from, per_epoch)),
                    s.scheduler.learning_rate);
      log << line << std::flush;
    });
    log << "checkpoint -> " << ckpt_path.string() << "\nmetrics -> " << metrics_path.string() << "\n";
    return kExitOk;
  }
};

struct EvalCmd {
  std::string checkpoint, manifest, split = "val", out;
  int group = 0;
  std::size_t batch = 100, image_size = kCanonicalSize, workers = 1;
  BilateralFlags bf;

  int operator()(std::ostream& log) const {
    const auto ck = load_checkpoint(checkpoint);
    auto net = network_from_checkpoint(ck);
    const auto means = checkpoint_means(ck);
    const auto m = load_manifest(manifest);
    ManifestImageSet set(m.select(split, group), image_size, bf.p);
    const auto r = evaluate(net, set, means, ck.spec.input_size, batch, workers);
    char line[160];
    std::snprintf(line, sizeof line, "%s: images %zu, loss %.6f, top1_error %.6f, top5_error %.6f\n", split.c_str(),
                  r.count, r.loss, r.top1_error, r.top5_error);
    log << line;
    if (!out.empty()) {
      CsvTable t;
      t.header = {"split", "group", "count", "loss", "top1_error", "top5_error"};
      char v[3][32];
      std::snprintf(v[0], 32, "%.6f", r.loss);
      std::snprintf(v[1], 32, "%.6f", r.top1_error);
      std::snprintf(v[2], 32, "%.6f", r.top5_error);
      t.rows.push_back({split, std::to_string(group), std::to_string(r.count), v[0], v[1], v[2]});
      write_output(out, t);
    }
    return kExitOk;
  }
};

struct GradcheckCmd {
  std::uint64_t seed = 1;
  GradcheckOptions opt;

  int operator()(std::ostream& log) const {
    auto results = run_layer_gradchecks(seed, opt);
    results.push_back(run_network_gradcheck(seed, opt));
    bool ok = true;
    for (const auto& r : results) {
      char line[160];
      std::snprintf(line, sizeof line, "%-24s max_rel_err %.3e  checked %zu  skipped %zu  %s\n", r.name.c_str(),
                    r.max_relative_error, r.checked, r.skipped, r.passed ? "ok" : "FAIL");
      log << line;
      ok = ok && r.passed;
    }
    log << (ok ? "all gradients match\n" : "gradient check failed\n");
    return ok ? kExitOk : kExitInternal;
  }
};

struct FeatmapsCmd {
  NetChoice nc;
  std::string image, out_dir;
  std::size_t layer = 1, path = 0, image_size = kCanonicalSize;
  BilateralFlags bf;

  int operator()(std::ostream& log) const {
    auto [net, means] = nc.load();
    const std::size_t crop = net.spec().input_size;
    const auto img = canonicalize(read_image(image), image_size);
    const auto window = center_window(image_size, crop);
    Batch<float> batch;
    batch.source = extract_crop(subtract_mean(img, means ? means->source : zero_mean(image_size)), window, crop)
                       .reshaped({1, 3, crop, crop});
    if (uses_bilateral(net.spec())) {
      const auto& bm = means && means->bilateral ? *means->bilateral : zero_mean(image_size);
      batch.bilateral =
          extract_crop(subtract_mean(bilateral_filter(img, bf.p), bm), window, crop).reshaped({1, 3, crop, crop});
    }
    const auto files = dump_feature_maps(net, batch, layer, out_dir, path);
    log << "wrote " << files.size() << " feature maps of layer " << layer << ", path " << path << " to " << out_dir
        << "\n";
    return kExitOk;
  }
};

struct FiltersCmd {
  NetChoice nc;
  std::string out_dir;

  int operator()(std::ostream& log) const {
    auto [net, means] = nc.load();
    std::size_t total = 0;
    for (std::size_t p = 0; p < net.spec().paths.size(); ++p) total += dump_filters(net, p, out_dir).size();
    log << "wrote " << total << " first-layer filters to " << out_dir << "\n";
    return kExitOk;
  }
};

int report(const Error& e, std::ostream& err) {
  err << "error: " << e.what() << "\n";
  if (e.kind() == ErrorKind::InvalidParameter) return kExitUsage;
  return e.is_data_error() ? kExitData : kExitInternal;
}

int parse_and_run(CLI::App& app, const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
                  const std::function<int()>& body) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    return body();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    return report(e, err);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

void setup(CLI::App& app) {
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.failure_message(CLI::FailureMessage::help);
}

}  // namespace

std::vector<std::string> config_file_args(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read config file " + path);
  std::vector<std::string> args;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(n) + ": expected key=value, got '" + line + "'");
    auto key = trim(line.substr(0, eq));
    while (!key.empty() && key[0] == '-') key.erase(0, 1);
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw UsageError(path + ":" + std::to_string(n) + ": empty key");
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-path CNN toolkit: complexity scoring, dataset splitting, bilateral inputs, training, "
               "evaluation and inspection."};
  app.name("mpcnn");
  setup(app);
  app.require_subcommand(1);

  std::size_t workers = 1;
  std::string config;
  const auto common = [&](CLI::App* sc, bool with_workers = true) {
    sc->add_option("--config", config, "key=value file with option defaults; flags on the command line win");
    if (with_workers)
      sc->add_option("--workers", workers, "Worker threads for image loading (results do not depend on it)")
          ->check(CLI::PositiveNumber);
  };

  ScoreCmd score;
  auto* s_score = app.add_subcommand("score", "Complexity index C of every image in a manifest");
  s_score->add_option("--manifest", score.manifest, "Input manifest (path,label,split)")->required();
  s_score->add_option("--out", score.out, "Output CSV (path,label,C)")->required();
  s_score->add_option("--image-size", score.image_size, "Canonical image side")->check(CLI::PositiveNumber);
  common(s_score);

  SplitCmd split;
  auto* s_split = app.add_subcommand("split", "Partition each class into complexity groups");
  s_split->add_option("--manifest", split.manifest, "Input manifest")->required();
  s_split->add_option("--out", split.out, "Output manifest with a group column")->required();
  s_split->add_option("--groups", split.groups, "Number of groups")->check(CLI::PositiveNumber);
  s_split->add_option("--per-group", split.per_group,
                      "Training images per class and group; 0 uses the smallest class size / groups");
  s_split->add_option("--val-per-group", split.val_per_group,
                      "Validation images per class and group; 0 uses the smallest class size / groups");
  s_split->add_option("--oversample-to", split.oversample_to,
                      "Grow every (group, class) training list to this many rows; 0 disables");
  s_split->add_option("--oversample-dir", split.oversample_dir,
                      "Write mirrored image copies here for oversampled rows (otherwise rows are repeated)");
  s_split->add_option("--seed", split.seed, "Seed for oversampling draws");
  s_split->add_option("--image-size", split.image_size, "Canonical image side")->check(CLI::PositiveNumber);
  common(s_split);

  BilateralCmd bil;
  auto* s_bil = app.add_subcommand("bilateral", "Write bilateral-filtered copies and a manifest pointing at them");
  s_bil->add_option("--manifest", bil.manifest, "Input manifest")->required();
  s_bil->add_option("--out", bil.out, "Output manifest with a bilateral_path column")->required();
  s_bil->add_option("--out-dir", bil.out_dir, "Directory for the filtered PNG images")->required();
  s_bil->add_option("--image-size", bil.image_size, "Canonical image side")->check(CLI::PositiveNumber);
  bil.bf.add(s_bil);
  common(s_bil);

  TrainCmd train;
  auto* s_train = app.add_subcommand("train", "Train a single- or two-path network");
  s_train->add_option("--manifest", train.manifest, "Manifest with train and (optionally) val rows")->required();
  s_train->add_option("--out-dir", train.out_dir, "Directory for model.ckpt, metrics.csv and mean images")
      ->required();
  s_train->add_option("--group", train.group, "Use only rows of this complexity group; 0 uses all rows");
  s_train->add_option("--arch", train.arch, "full (227/224 crops) or compact (small images)")
      ->check(CLI::IsMember({"full", "compact"}));
  s_train->add_option("--paths", train.paths, "1 = source only, 2 = source + bilateral")->check(CLI::Range(1, 2));
  s_train->add_option("--classes", train.classes, "Number of classes")->check(CLI::PositiveNumber);
  s_train->add_option("--image-size", train.image_size, "Canonical image side")->check(CLI::PositiveNumber);
  s_train->add_option("--crop", train.cfg.crop, "Network input crop")->check(CLI::PositiveNumber);
  s_train->add_option("--dropout", train.dropout, "Dropout rate before both FC layers; 0 disables")
      ->check(CLI::Range(0.0, 0.99));
  s_train->add_option("--batch", train.cfg.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  s_train->add_option("--epochs", train.cfg.epochs, "Total epochs (including resumed ones)");
  s_train->add_option("--val-freq", train.cfg.val_freq, "Training batches between validation batches")
      ->check(CLI::PositiveNumber);
  s_train->add_option("--seed", train.cfg.seed, "Seed for init, shuffling, augmentation and dropout");
  s_train->add_option("--lr", train.cfg.learning_rate, "Initial learning rate");
  s_train->add_option("--momentum", train.cfg.momentum, "SGD momentum");
  s_train->add_option("--weight-decay", train.cfg.weight_decay, "L2 weight decay");
  s_train->add_option("--lr-decay", train.cfg.lr_decay, "Factor applied when validation error plateaus");
  s_train->add_option("--min-improvement", train.cfg.min_improvement,
                      "Validation top-1 drop that counts as progress");
  s_train->add_option("--patience", train.cfg.patience, "Validation points without progress before decaying");
  s_train->add_option("--augment", train.cfg.augment, "Random crops and mirroring (true/false)");
  s_train->add_option("--mean-mode", train.mean_mode, "Mean subtraction: per-position or global")
      ->check(CLI::IsMember({"per-position", "global"}));
  s_train->add_option("--resume", train.resume, "Continue from this checkpoint");
  train.bf.add(s_train);
  s_train->add_option("--config", config, "key=value file with option defaults; flags on the command line win");
  s_train->add_option("--workers", train.cfg.workers, "Worker threads for image loading (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  EvalCmd ev;
  auto* s_eval = app.add_subcommand("eval", "Top-1/top-5 error of a checkpoint on manifest rows");
  s_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint from train")->required();
  s_eval->add_option("--manifest", ev.manifest, "Manifest to evaluate")->required();
  s_eval->add_option("--split", ev.split, "Rows to use")->check(CLI::IsMember({"train", "val"}));
  s_eval->add_option("--group", ev.group, "Use only rows of this complexity group; 0 uses all rows");
  s_eval->add_option("--batch", ev.batch, "Evaluation batch size")->check(CLI::PositiveNumber);
  s_eval->add_option("--image-size", ev.image_size, "Canonical image side")->check(CLI::PositiveNumber);
  s_eval->add_option("--out", ev.out, "Optional CSV for the result");
  ev.bf.add(s_eval);
  common(s_eval);

  GradcheckCmd gc;
  auto* s_gc = app.add_subcommand("gradcheck", "Finite-difference check of every layer and a tiny two-path net");
  s_gc->add_option("--seed", gc.seed, "Seed for the random instances");
  s_gc->add_option("--epsilon", gc.opt.epsilon, "Central-difference step")->check(CLI::PositiveNumber);
  s_gc->add_option("--tolerance", gc.opt.tolerance, "Largest accepted relative error")->check(CLI::PositiveNumber);
  common(s_gc, false);

  FeatmapsCmd fm;
  auto* s_fm = app.add_subcommand("featmaps", "Dump the feature maps of one conv block for one image");
  s_fm->add_option("--image", fm.image, "Input image (PNG or PPM)")->required();
  s_fm->add_option("--out-dir", fm.out_dir, "Output directory")->required();
  s_fm->add_option("--layer", fm.layer, "Conv block, 1-based")->check(CLI::PositiveNumber);
  s_fm->add_option("--path", fm.path, "Path index (0 = source, 1 = bilateral)");
  s_fm->add_option("--image-size", fm.image_size, "Canonical image side")->check(CLI::PositiveNumber);
  fm.nc.add(s_fm);
  fm.bf.add(s_fm);
  common(s_fm, false);

  FiltersCmd fl;
  auto* s_fl = app.add_subcommand("filters", "Dump first-layer filters of every path as RGB tiles");
  s_fl->add_option("--out-dir", fl.out_dir, "Output directory")->required();
  fl.nc.add(s_fl);
  common(s_fl, false);

  std::set<std::string> names;
  for (const auto* sc : app.get_subcommands([](const CLI::App*) { return true; })) names.insert(sc->get_name());
  std::vector<std::string> args;
  try {
    args = with_config(raw_args, names);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    return report(e, err);
  }

  return parse_and_run(app, args, out, err, [&]() -> int {
    score.workers = split.workers = bil.workers = ev.workers = workers;
    CLI::App* sc = app.get_subcommands().front();
    const auto echo = resolved_config(*sc);
    out << echo << std::flush;
    if (sc == s_score) return score(out);
    if (sc == s_split) return split(out);
    if (sc == s_bil) return bil(out);
    if (sc == s_train) return train(out, echo);
    if (sc == s_eval) return ev(out);
    if (sc == s_gc) return gc(out);
    if (sc == s_fm) return fm(out);
    return fl(out);
  });
}

int run_synth(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Writes a synthetic shape dataset (PNG images plus a path,label,split manifest)."};
  app.name("mpcnn-synth");
  setup(app);
  std::string out_dir, background = "plain";
  std::size_t classes = 10, per_class = 20, val_per_class = 10;
  std::uint64_t seed = 1;
  ShapeSetOptions opt;
  app.add_option("--out-dir", out_dir, "Output directory; the manifest is written as manifest.csv")->required();
  app.add_option("--classes", classes, "Number of classes (at most 10 shapes)")->check(CLI::Range(1, 10));
  app.add_option("--per-class", per_class, "Training images per class")->check(CLI::PositiveNumber);
  app.add_option("--val-per-class", val_per_class, "Validation images per class");
  app.add_option("--size", opt.size, "Image side in pixels")->check(CLI::Range(8, 4096));
  app.add_option("--background", background, "plain or noise")->check(CLI::IsMember({"plain", "noise"}));
  app.add_option("--noise-amplitude", opt.noise_amplitude, "Background noise amplitude on the [0,1] scale");
  app.add_option("--color-by-class", opt.color_by_class, "Give every class its own color (true/false)");
  app.add_option("--foreground-jitter", opt.foreground_jitter, "Per-pixel jitter on the shapes");
  app.add_option("--seed", seed, "Dataset seed");

  return parse_and_run(app, args, out, err, [&]() -> int {
    opt.background = background == "noise" ? Background::Noise : Background::Plain;
    ensure_dir(out_dir);
    const fs::path dir(out_dir);
    CsvTable t;
    t.header = {"path", "label", "split"};
    const auto emit = [&](const LabeledImages& d, const std::string& split) {
      for (std::size_t i = 0; i < d.images.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%05zu.png", split.c_str(), i);
        write_png(dir / name, d.images[i]);
        t.rows.push_back({name, std::to_string(d.labels[i]), split});
      }
    };
    emit(make_shape_dataset(classes, per_class, opt, derive_seed(seed, {1})), "train");
    if (val_per_class) emit(make_shape_dataset(classes, val_per_class, opt, derive_seed(seed, {2})), "val");
    write_output(dir / "manifest.csv", t);
    out << "wrote " << t.rows.size() << " images and " << (dir / "manifest.csv").string() << "\n";
    return kExitOk;
  });
}

}  // namespace mpcnn::cli

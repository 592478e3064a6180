#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mfeit/admm/admm.hpp"
#include "mfeit/data/dataset.hpp"
#include "mfeit/error.hpp"
#include "mfeit/eval/evaluate.hpp"
#include "mfeit/fem/protocol.hpp"
#include "mfeit/io/pgm.hpp"
#include "mfeit/net/train.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace mfeit;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kNumerical = 4 };

cli::RunConfig load_config(const std::string& path) {
  return path.empty() ? cli::RunConfig::from_json(nlohmann::json::object()) : cli::RunConfig::load(path);
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

data::Dataset load_dataset(const std::string& path) {
  if (path.empty()) throw ConfigError("--dataset is required");
  if (!fs::exists(path)) throw IoError("dataset '" + path + "' does not exist");
  return data::read_dataset(path);
}

net::MmvNet load_net(const std::string& checkpoint, const data::Dataset& ds) {
  if (checkpoint.empty()) throw ConfigError("method 'net' requires --checkpoint");
  if (!fs::exists(checkpoint)) throw IoError("checkpoint '" + checkpoint + "' does not exist");
  return net::MmvNet::load(checkpoint, ds.grid, ds.A.entries);
}

void write_frames(const fs::path& dir, const std::string& stem, const Eigen::MatrixXd& x, const fem::PixelGrid& grid) {
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    const auto raster = eval::embed(x.col(f), grid);
    const std::string name = stem + "_f" + std::to_string(f + 1);
    io::write_pgm(dir / (name + ".pgm"), io::quantize(raster, grid.height(), grid.width()));
    io::write_image_csv(dir / (name + ".csv"), raster, grid.height(), grid.width());
  }
}

net::MmvNet train_fresh(const data::Dataset& ds, net::NetConfig nc, net::TrainConfig tc, const fs::path& loss_csv) {
  nc.validate(ds.grid.height(), ds.grid.width());
  tc.blocks = nc.blocks;
  net::MmvNet model(nc, ds.grid, ds.A.entries, ds.l());
  auto log = net::train(model, ds.train, ds.val, tc, [](const net::EpochLog& e) {
    std::fprintf(stderr, "stage %c epoch %d  train %.6g  val %.6g  val_rmse %.6g\n", net::stage_letter(e.stage),
                 e.epoch, e.train_loss, e.val_loss, e.val_rmse);
  });
  if (!loss_csv.empty()) net::write_loss_csv(loss_csv, log);
  return model;
}

int run_gen_dataset(const std::string& config_path, const std::string& out) {
  auto config = load_config(config_path);
  ensure_parent(out);
  const auto ds = data::generate_dataset(config.dataset, config.seed);
  data::write_dataset(out, ds);
  data::write_manifest(with_suffix(out, ".manifest.json"), ds);
  config.save(with_suffix(out, ".config.json"));
  std::printf("wrote %s: m=%d n=%d l=%d H=%d W=%d train=%zu val=%zu test=%zu\n", out.c_str(), ds.m(), ds.n(),
              ds.l(), ds.grid.height(), ds.grid.width(), ds.train.size(), ds.val.size(), ds.test.size());
  return kOk;
}

int run_build_sensitivity(const std::string& config_path, const std::string& out) {
  auto config = load_config(config_path);
  const auto& d = config.dataset;
  ensure_parent(out);
  const auto mesh = fem::build_disc_mesh(d.sensor, d.jacobian_level);
  const auto protocol = fem::adjacent_protocol(d.sensor.n_electrodes);
  const auto grid = fem::build_pixel_grid(d.height, d.width);
  const auto a = fem::sensitivity_matrix(mesh, d.groups.background, protocol, grid);
  fem::write_sensitivity(out, a);
  config.save(with_suffix(out, ".config.json"));
  std::printf("wrote %s: m=%ld n=%ld\n", out.c_str(), static_cast<long>(a.m()), static_cast<long>(a.n()));
  return kOk;
}

struct ReconstructArgs {
  std::string method = "gn";
  std::string dataset;
  std::string split = "test";
  int sample = 0;
  std::string checkpoint;
  std::string render_dir;
  std::string config;
  int iters = 0;
  bool dump_intermediates = false;
};

int run_reconstruct(const ReconstructArgs& a) {
  auto config = load_config(a.config);
  if (a.iters > 0) config.admm.iterations = a.iters;
  const auto method = eval::parse_method(a.method);
  const auto ds = load_dataset(a.dataset);
  const auto& samples = ds.split(a.split);
  if (a.sample < 0 || a.sample >= static_cast<int>(samples.size())) {
    throw ConfigError("--sample " + std::to_string(a.sample) + " is outside the " + a.split + " split (" +
                      std::to_string(samples.size()) + " samples)");
  }
  const auto& s = samples[a.sample];
  const fs::path dir = a.render_dir;
  ensure_dir(dir);

  std::optional<net::MmvNet> model;
  if (method == eval::Method::net) model.emplace(load_net(a.checkpoint, ds));
  eval::Evaluator ev(ds.grid, ds.A.entries, config.admm, model ? &*model : nullptr);

  Eigen::MatrixXd x;
  if (method == eval::Method::admm) {
    auto result = ev.admm(s.B, &s.X);
    admm::write_history_csv(dir / "convergence.csv", result.history);
    x = result.state.Z;
  } else if (method == eval::Method::net && a.dump_intermediates) {
    std::vector<Eigen::MatrixXd> inter;
    x = model->reconstruct(s.B, -1, &inter);
    for (std::size_t k = 0; k < inter.size(); ++k) write_frames(dir, "block" + std::to_string(k + 1), inter[k], ds.grid);
  } else {
    x = ev.reconstruct(method, s.B);
  }
  write_frames(dir, "recon", x, ds.grid);
  write_frames(dir, "gt", s.X, ds.grid);
  eval::write_metrics_csv(dir / "metrics.csv", {{eval::score(a.method, x, s.X, ds.grid)}});
  config.save(dir / "config.json");
  return kOk;
}

int run_train(const std::string& dataset, const std::string& config_path, const std::string& out,
              const std::string& arch) {
  auto config = load_config(config_path);
  if (out.empty()) throw ConfigError("--out is required");
  if (!arch.empty()) config.net.arch = net::parse_arch(arch);
  const auto ds = load_dataset(dataset);
  ensure_parent(out);
  config.net.validate(ds.grid.height(), ds.grid.width());
  config.train.blocks = config.net.blocks;
  net::MmvNet model(config.net, ds.grid, ds.A.entries, ds.l());
  std::vector<net::EpochLog> log;
  auto report = [](const net::EpochLog& e) {
    std::fprintf(stderr, "stage %c epoch %d  train %.6g  val %.6g  val_rmse %.6g\n", net::stage_letter(e.stage),
                 e.epoch, e.train_loss, e.val_loss, e.val_rmse);
  };
  const struct {
    net::Stage stage;
    int epochs;
    int blocks;
  } stages[] = {{net::Stage::a, config.train.epochs_a, 1},
                {net::Stage::b, config.train.epochs_b, 1},
                {net::Stage::c, config.train.epochs_c, config.net.blocks}};
  for (const auto& st : stages) {
    auto part = net::train_stage(model, st.stage, st.epochs, st.blocks, ds.train, ds.val, config.train, report);
    log.insert(log.end(), part.begin(), part.end());
    if (st.stage != net::Stage::c) model.save(with_suffix(out, std::string(".stage") + net::stage_letter(st.stage)));
  }
  model.save(out);
  net::write_loss_csv(with_suffix(out, ".loss.csv"), log);
  config.save(with_suffix(out, ".config.json"));
  std::printf("wrote %s (%zu parameters)\n", out.c_str(), model.parameter_count());
  return kOk;
}

struct EvalArgs {
  std::string dataset;
  std::string split = "test";
  std::vector<std::string> methods{"gn", "admm"};
  std::string checkpoint;
  std::string out_dir = ".";
  std::string config;
  bool noise_sweep = false;
  bool convergence = false;
  std::vector<int> iter_sweep;
  bool retrain = false;
  std::vector<std::string> ablation;
};

int run_eval(EvalArgs a, bool iter_sweep_requested) {
  auto config = load_config(a.config);
  const auto ds = load_dataset(a.dataset);
  const auto& samples = ds.split(a.split);
  const fs::path dir = a.out_dir;
  ensure_dir(dir);

  std::optional<net::MmvNet> model;
  bool needs_net = false;
  for (const auto& m : a.methods) needs_net |= eval::parse_method(m) == eval::Method::net;
  if (needs_net || (iter_sweep_requested && !a.retrain)) model.emplace(load_net(a.checkpoint, ds));
  eval::Evaluator ev(ds.grid, ds.A.entries, config.admm, model ? &*model : nullptr);

  eval::MetricReport report;
  std::vector<eval::ConvergencePoint> curves;
  std::vector<eval::NoisePoint> noise;
  for (const auto& name : a.methods) {
    const auto m = eval::parse_method(name);
    report.methods.push_back(ev.evaluate(m, samples));
    if (a.convergence && m != eval::Method::gn) {
      auto c = ev.convergence(m, samples);
      curves.insert(curves.end(), c.begin(), c.end());
    }
    if (a.noise_sweep) {
      auto p = ev.noise_sweep(m, samples, config.eval.snrs, config.eval.noise_seed);
      noise.insert(noise.end(), p.begin(), p.end());
    }
  }
  eval::write_metrics_csv(dir / "metrics.csv", report);
  if (a.convergence) eval::write_convergence_csv(dir / "convergence.csv", curves);
  if (a.noise_sweep) eval::write_noise_csv(dir / "noise.csv", noise);

  if (iter_sweep_requested) {
    const auto ks = a.iter_sweep.empty() ? config.eval.iter_sweep : a.iter_sweep;
    std::ofstream out(dir / "iter_sweep.csv");
    if (!out) throw IoError("cannot write '" + (dir / "iter_sweep.csv").string() + "'");
    out.precision(10);
    out << "K_s,psnr,ssim,rmse\n";
    for (int k : ks) {
      std::optional<net::MmvNet> local;
      net::MmvNet* target = nullptr;
      if (a.retrain) {
        auto nc = config.net;
        nc.blocks = k;
        local.emplace(train_fresh(ds, nc, config.train, dir / ("train_K" + std::to_string(k) + ".loss.csv")));
        target = &*local;
      } else {
        local.emplace(*model);
        local->set_blocks(k);
        target = &*local;
      }
      eval::Evaluator kev(ds.grid, ds.A.entries, config.admm, target);
      const auto r = kev.evaluate(eval::Method::net, samples);
      out << k << ',' << r.average_psnr() << ',' << r.average_ssim() << ',' << r.average_rmse() << '\n';
    }
  }

  if (!a.ablation.empty()) {
    std::ofstream out(dir / "ablation.csv");
    if (!out) throw IoError("cannot write '" + (dir / "ablation.csv").string() + "'");
    out.precision(10);
    out << "arch,psnr,ssim,rmse\n";
    for (const auto& name : a.ablation) {
      auto nc = config.net;
      nc.arch = net::parse_arch(name);
      auto trained = train_fresh(ds, nc, config.train, dir / ("train_" + name + ".loss.csv"));
      eval::Evaluator aev(ds.grid, ds.A.entries, config.admm, &trained);
      const auto r = aev.evaluate(eval::Method::net, samples);
      out << name << ',' << r.average_psnr() << ',' << r.average_ssim() << ',' << r.average_rmse() << '\n';
    }
  }
  config.save(dir / "config.json");
  for (const auto& m : report.methods) {
    std::printf("%-5s psnr %.4f  ssim %.4f  rmse %.6f\n", m.method.c_str(), m.average_psnr(), m.average_ssim(),
                m.average_rmse());
  }
  return kOk;
}

int run_render(const std::string& input, const std::string& colormap, const std::string& out) {
  if (colormap != "gray") throw ConfigError("only the 'gray' colormap is supported");
  if (!fs::exists(input)) throw IoError("input image '" + input + "' does not exist");
  int h = 0, w = 0;
  const auto values = io::read_image_csv(input, h, w);
  ensure_parent(out);
  io::write_pgm(out, io::quantize(values, h, w));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-frequency EIT reconstruction toolkit"};
  app.require_subcommand(1);

  std::string config, out, dataset, arch;
  auto* gen = app.add_subcommand("gen-dataset", "Simulate a dataset container");
  gen->add_option("--config", config, "Run configuration (JSON)");
  gen->add_option("--out", out, "Output container")->required();

  auto* sens = app.add_subcommand("build-sensitivity", "Compute the sensitivity matrix");
  sens->add_option("--config", config, "Run configuration (JSON)");
  sens->add_option("--out", out, "Output file")->required();

  ReconstructArgs rec;
  auto* recon = app.add_subcommand("reconstruct", "Reconstruct one sample and render it");
  recon->add_option("--method", rec.method, "gn, admm or net")->required();
  recon->add_option("--dataset", rec.dataset, "Dataset container")->required();
  recon->add_option("--split", rec.split, "train, val or test");
  recon->add_option("--sample", rec.sample, "Sample index within the split");
  recon->add_option("--checkpoint", rec.checkpoint, "Network checkpoint (method net)");
  recon->add_option("--render-dir", rec.render_dir, "Output directory")->required();
  recon->add_option("--config", rec.config, "Run configuration (JSON)");
  recon->add_option("--iters", rec.iters, "ADMM iterations");
  recon->add_flag("--dump-intermediates", rec.dump_intermediates, "Write Z after every block (method net)");

  auto* train = app.add_subcommand("train", "Train the unrolled network (stages A, B, C)");
  train->add_option("--dataset", dataset, "Dataset container")->required();
  train->add_option("--config", config, "Run configuration (JSON)");
  train->add_option("--out", out, "Checkpoint path")->required();
  train->add_option("--arch", arch, "both, ssa_only, lstm_only or identity");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate methods on a split");
  ev->add_option("--dataset", ea.dataset, "Dataset container")->required();
  ev->add_option("--split", ea.split, "train, val or test");
  ev->add_option("--methods", ea.methods, "Comma separated methods")->delimiter(',');
  ev->add_option("--checkpoint", ea.checkpoint, "Network checkpoint");
  ev->add_option("--out-dir", ea.out_dir, "Output directory");
  ev->add_option("--config", ea.config, "Run configuration (JSON)");
  ev->add_flag("--noise-sweep", ea.noise_sweep, "PSNR over the configured SNR grid");
  ev->add_flag("--convergence", ea.convergence, "Per-iteration RMSE curves");
  auto* sweep = ev->add_option("--iter-sweep", ea.iter_sweep, "K_s values (default from config)")
                    ->delimiter(',')
                    ->expected(0, -1);
  ev->add_flag("--retrain", ea.retrain, "Retrain from scratch for every K_s of the sweep");
  ev->add_option("--ablation", ea.ablation, "Architectures to train and compare")->delimiter(',');

  std::string input, colormap = "gray";
  auto* render = app.add_subcommand("render", "Convert a CSV image to PGM");
  render->add_option("--input", input, "CSV image")->required();
  render->add_option("--colormap", colormap, "gray");
  render->add_option("--out", out, "Output PGM")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return run_gen_dataset(config, out);
    if (*sens) return run_build_sensitivity(config, out);
    if (*recon) return run_reconstruct(rec);
    if (*train) return run_train(dataset, config, out, arch);
    if (*ev) return run_eval(ea, sweep->count() > 0);
    if (*render) return run_render(input, colormap, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

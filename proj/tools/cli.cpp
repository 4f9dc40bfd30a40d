#include "cli.hpp"

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ntkfilter/arch.hpp"
#include "ntkfilter/denoiser.hpp"
#include "ntkfilter/errors.hpp"
#include "ntkfilter/finite_cnn.hpp"
#include "ntkfilter/gp.hpp"
#include "ntkfilter/metrics.hpp"
#include "ntkfilter/nlm.hpp"
#include "ntkfilter/ntk_engine.hpp"
#include "ntkfilter/nystrom.hpp"
#include "ntkfilter/png_io.hpp"
#include "ntkfilter/spectral.hpp"

namespace ntkf::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

namespace {

using Clock = std::chrono::steady_clock;

// Options shared by the commands that read an image and add noise to it.
struct ImageOptions {
  std::string input;
  std::string clean;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  bool gray = false;
};

struct ArchOptions {
  std::string arch = "vanilla";
  std::optional<int> kernel_size;
  std::optional<double> sigma_w_sq;
};

struct OutputOptions {
  std::string out;
  std::string metrics;
  std::string summary;
};

void add_image_options(CLI::App* app, ImageOptions& o, bool input_required = true) {
  auto* in = app->add_option("--input", o.input, "Observed image (PNG)");
  if (input_required) in->required();
  app->add_option("--clean", o.clean, "Clean reference image used as the PSNR oracle");
  app->add_option("--sigma", o.sigma, "Add Gaussian noise of this level (8-bit units) to --input")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--seed", o.seed, "Noise and sampling seed");
  app->add_flag("--gray", o.gray, "Convert colour input to luminance");
}

void add_arch_options(CLI::App* app, ArchOptions& o) {
  app->add_option("--arch", o.arch,
                  "Architecture JSON file or one of: vanilla, deep_vanilla, autoencoder, unet");
  app->add_option("--kernel-size", o.kernel_size, "Override the first conv kernel size");
  app->add_option("--sigma-w-sq", o.sigma_w_sq, "Override the weight variance scale");
}

void require_file(const std::string& path, const char* what) {
  if (!path.empty() && !fs::is_regular_file(path)) {
    throw ConfigError(std::string(what) + " not found: " + path);
  }
}

void require_parent(const std::string& path) {
  if (path.empty()) return;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw ConfigError("output directory does not exist: " + parent.string());
  }
}

ArchSpec resolve_arch(const ArchOptions& o, int channels) {
  ArchSpec a;
  if (o.arch == "vanilla") {
    a = vanilla_arch(11);
  } else if (o.arch == "deep_vanilla") {
    a = deep_vanilla_arch(10, 3);
  } else if (o.arch == "autoencoder") {
    a = autoencoder_arch(3);
  } else if (o.arch == "unet") {
    a = autoencoder_arch(3, 1, true);
  } else {
    require_file(o.arch, "architecture file");
    a = load_arch(o.arch);
  }
  if (o.kernel_size) a.layers.front().r = *o.kernel_size;
  if (o.sigma_w_sq) a.sigma_w_sq = *o.sigma_w_sq;
  a.input_channels = a.output_channels = channels;
  a.validate();
  return a;
}

struct Observed {
  ImageTensor noisy;
  std::optional<ImageTensor> oracle;
};

Observed load_observed(const ImageOptions& o) {
  require_file(o.input, "input image");
  require_file(o.clean, "clean image");
  Observed ob;
  ImageTensor in = load_png(o.input);
  if (o.gray) in = luminance(in);
  ob.noisy = add_gaussian_noise(in, {o.sigma, o.seed});
  if (!o.clean.empty()) {
    ImageTensor c = load_png(o.clean);
    if (o.gray) c = luminance(c);
    if (!c.same_shape(in)) throw ConfigError("clean image does not match the input");
    ob.oracle = std::move(c);
  } else if (o.sigma > 0.0) {
    ob.oracle = std::move(in);
  }
  return ob;
}

json image_config(const ImageOptions& o) {
  return {{"input", o.input}, {"clean", o.clean}, {"sigma", o.sigma}, {"seed", o.seed}, {"gray", o.gray}};
}

void emit_summary(const std::string& command, const json& config, double psnr_best, long t_best,
                  Clock::time_point start, json details, const std::string& path, std::ostream& out) {
  const double wall_ms =
      std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  json s = {{"command", command},
            {"config_hash", fnv1a_hex(command + config.dump())},
            {"psnr_best", psnr_best},
            {"t_best", t_best},
            {"wall_ms", wall_ms},
            {"details", std::move(details)}};
  out << s.dump(2) << '\n';
  if (!path.empty()) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << s.dump(2) << '\n';
  }
}

// ---- denoise ---------------------------------------------------------------

struct DenoiseOptions {
  ImageOptions image;
  ArchOptions arch;
  OutputOptions output;
  std::string mode = "nystrom";
  std::string basis = "orthonormal";
  double fraction = 0.02;
  long max_iters = 20000;
};

int cmd_denoise(const DenoiseOptions& o, std::ostream& out) {
  require_parent(o.output.out);
  require_parent(o.output.metrics);
  require_parent(o.output.summary);
  if (!(o.fraction > 0.0 && o.fraction <= 1.0)) throw ConfigError("--fraction must lie in (0, 1]");
  const auto start = Clock::now();
  Observed ob = load_observed(o.image);
  if (!ob.oracle) throw ConfigError("denoise needs an oracle: pass --clean or a positive --sigma");
  const ArchSpec arch = resolve_arch(o.arch, ob.noisy.channels());

  TwicingTrace trace;
  json details;
  if (o.mode == "full") {
    const NtkResult k = ntk_recursion(arch, ob.noisy);
    trace = twicing_matrix(k.theta, ob.noisy, *ob.oracle, o.max_iters);
    details["scale_applied"] = k.scale_applied;
  } else if (o.mode == "nystrom") {
    const NystromBasis basis = o.basis == "extended" ? NystromBasis::kExtended : NystromBasis::kOrthonormal;
    if (o.basis != "extended" && o.basis != "orthonormal") throw ConfigError("unknown --basis " + o.basis);
    const auto idx = sample_columns(ob.noisy.geometry(), o.fraction, o.image.seed);
    const NystromFactors f = nystrom_factorize(kernel_columns(arch, ob.noisy, idx), idx, basis);
    trace = twicing_spectral(f, ob.noisy, *ob.oracle, o.max_iters);
    details["m"] = idx.size();
    details["rank"] = f.eigenvalues.size();
    details["clipped_negative"] = f.clipped_negative;
  } else {
    throw ConfigError("unknown --mode " + o.mode);
  }
  if (!o.output.out.empty()) save_png(trace.best_output, o.output.out);
  if (!o.output.metrics.empty()) write_trace_csv(trace, o.output.metrics);
  details["psnr_noisy"] = psnr(ob.noisy, *ob.oracle);
  details["mode"] = o.mode;
  details["pixels"] = ob.noisy.pixels();
  json cfg = {{"image", image_config(o.image)}, {"arch", arch_to_json(arch)}, {"mode", o.mode},
              {"basis", o.basis}, {"fraction", o.fraction}, {"max_iters", o.max_iters}};
  emit_summary("denoise", cfg, trace.best_psnr, trace.best_iteration, start, details,
               o.output.summary, out);
  return kOk;
}

// ---- simulate --------------------------------------------------------------

struct SimulateOptions {
  ImageOptions image;
  ArchOptions arch;
  std::string optimizer = "adam";
  std::string input_mode = "image";
  int channels = 32;
  long iters = 1000;
  long telemetry_every = 10;
  double lr = 1e-3;
  double gamma = 1.0;
  double noise_input_std = 0.1;
  int eigenimages = 0;
  std::string out_dir;
  std::string summary;
};

ImageTensor network_input(const SimulateOptions& o, const ImageTensor& noisy, int channels) {
  if (o.input_mode == "image") return noisy;
  if (o.input_mode == "noise") {
    return o.noise_input_std * gaussian_noise_image(channels, noisy.geometry(), o.image.seed + 1);
  }
  throw ConfigError("unknown --input-mode " + o.input_mode);
}

void save_eigenimages(const SortedEigen& e, Geometry g, const fs::path& dir, const std::string& tag) {
  for (Eigen::Index i = 0; i < e.vectors.cols(); ++i) {
    ImageTensor img(1, g);
    img.channel_vector(0) = e.vectors.col(i);
    save_png_stretched(img, dir / (tag + "_eig" + std::to_string(i) + ".png"));
  }
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  if (!o.out_dir.empty() && !fs::is_directory(o.out_dir)) {
    throw ConfigError("output directory does not exist: " + o.out_dir);
  }
  require_parent(o.summary);
  if (o.channels < 1 || o.iters < 0 || o.telemetry_every < 1) throw ConfigError("bad simulation sizes");
  const auto start = Clock::now();
  Observed ob = load_observed(o.image);
  const ArchSpec arch = resolve_arch(o.arch, ob.noisy.channels());
  const ImageTensor x = network_input(o, ob.noisy, arch.input_channels);

  FiniteCnn net(arch, o.channels, ob.noisy.geometry(), o.image.seed + 2);
  OptimizerConfig oc;
  oc.kind = parse_optimizer(o.optimizer);
  oc.learning_rate = oc.kind == OptimizerKind::kGd ? gd_learning_rate(net, x, o.gamma) : o.lr;
  Optimizer opt(oc);

  const fs::path dir = o.out_dir;
  if (o.eigenimages > 0 && !o.out_dir.empty()) {
    save_eigenimages(preactivation_eigenvectors(net, x, o.eigenimages), x.geometry(), dir, "init");
  }
  TrainOptions to;
  to.iters = o.iters;
  to.telemetry_every = o.telemetry_every;
  to.translate_output = o.input_mode == "image";
  to.oracle = ob.oracle;
  const TrainResult r = train(net, opt, x, ob.noisy, to);

  json report = {{"layer_max_change", r.report.layer_max_change},
                 {"hidden_max_change", r.report.hidden_max_change},
                 {"last_max_change", r.report.last_max_change},
                 {"global_l2_change", r.report.global_l2_change}};
  if (!o.out_dir.empty()) {
    write_telemetry_csv(r, dir / "telemetry.csv");
    std::ofstream(dir / "weight_change.json") << report.dump(2) << '\n';
    save_png(r.best_output, dir / "best.png");
    if (o.eigenimages > 0) {
      save_eigenimages(preactivation_eigenvectors(net, x, o.eigenimages), x.geometry(), dir, "final");
    }
  }
  json details = {{"learning_rate", oc.learning_rate}, {"weight_change", report},
                  {"final_loss", r.telemetry.back().loss}};
  if (ob.oracle) details["psnr_noisy"] = psnr(ob.noisy, *ob.oracle);
  json cfg = {{"image", image_config(o.image)}, {"arch", arch_to_json(arch)},
              {"optimizer", o.optimizer}, {"input_mode", o.input_mode}, {"channels", o.channels},
              {"iters", o.iters}, {"lr", o.lr}, {"gamma", o.gamma},
              {"noise_input_std", o.noise_input_std}};
  emit_summary("simulate", cfg, ob.oracle ? r.best_psnr : 0.0, r.best_iteration, start, details,
               o.summary, out);
  return kOk;
}

// ---- kernel ----------------------------------------------------------------

struct KernelOptions {
  ImageOptions image;
  ArchOptions arch;
  std::string input_mode = "image";
  std::string out;
  std::string csv;
  std::string eigen_dir;
  int eigenimages = 0;
  std::string summary;
};

int cmd_kernel(const KernelOptions& o, std::ostream& out) {
  require_parent(o.out);
  require_parent(o.csv);
  require_parent(o.summary);
  if (!o.eigen_dir.empty() && !fs::is_directory(o.eigen_dir)) {
    throw ConfigError("eigenimage directory does not exist: " + o.eigen_dir);
  }
  const auto start = Clock::now();
  Observed ob = load_observed(o.image);
  const ArchSpec arch = resolve_arch(o.arch, ob.noisy.channels());
  const ImageTensor& x = ob.noisy;
  const NtkResult k = o.input_mode == "noise"
                          ? ntk_recursion(arch, noise_input_covariance(x.geometry()), x.geometry())
                          : ntk_recursion(arch, x);
  if (!o.out.empty()) write_matrix_binary(k.theta.matrix(), o.out);
  if (!o.csv.empty()) write_matrix_csv(k.theta.matrix(), o.csv);
  const SortedEigen es = sorted_eigen(k.theta.matrix());
  if (!o.eigen_dir.empty() && o.eigenimages > 0) {
    SortedEigen top{es.values.head(o.eigenimages), es.vectors.leftCols(o.eigenimages)};
    save_eigenimages(top, x.geometry(), o.eigen_dir, "theta");
  }
  const Eigen::MatrixXd& t = k.theta.matrix();
  const double diag = t.diagonal().mean();
  const double off = (t.sum() - t.trace()) / static_cast<double>(t.size() - t.rows());
  std::vector<double> top;
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(10, es.values.size()); ++i) top.push_back(es.values[i]);
  json details = {{"scale_applied", k.scale_applied}, {"top_eigenvalues", top},
                  {"offdiag_over_diag", off / diag}, {"pixels", x.pixels()},
                  {"rank_1e-10", (es.values.array() > 1e-10).count()}};
  json cfg = {{"image", image_config(o.image)}, {"arch", arch_to_json(arch)}, {"input_mode", o.input_mode}};
  emit_summary("kernel", cfg, 0.0, 0, start, details, o.summary, out);
  return kOk;
}

// ---- nlm -------------------------------------------------------------------

struct NlmOptions {
  ImageOptions image;
  int patch_radius = 3;
  double bandwidth = 0.1;
  std::string out;
  std::string summary;
};

int cmd_nlm(const NlmOptions& o, std::ostream& out) {
  require_parent(o.out);
  require_parent(o.summary);
  const auto start = Clock::now();
  Observed ob = load_observed(o.image);
  const KernelMatrix w = nlm_filter(ob.noisy, {o.patch_radius, o.bandwidth});
  const ImageTensor z = apply_filter(w, ob.noisy);
  if (!o.out.empty()) save_png(z, o.out);
  json details = {{"pixels", z.pixels()}};
  double p = 0.0;
  if (ob.oracle) {
    p = psnr(z, *ob.oracle);
    details["psnr_noisy"] = psnr(ob.noisy, *ob.oracle);
  }
  json cfg = {{"image", image_config(o.image)}, {"patch_radius", o.patch_radius}, {"bandwidth", o.bandwidth}};
  emit_summary("nlm", cfg, p, 1, start, details, o.summary, out);
  return kOk;
}

// ---- gp --------------------------------------------------------------------

struct GpOptions {
  ImageOptions image;
  ArchOptions arch;
  std::string input_mode = "image";
  std::optional<double> noise_sigma;
  std::string out;
  std::string summary;
};

int cmd_gp(const GpOptions& o, std::ostream& out) {
  require_parent(o.out);
  require_parent(o.summary);
  const auto start = Clock::now();
  Observed ob = load_observed(o.image);
  const ArchSpec arch = resolve_arch(o.arch, ob.noisy.channels());
  const Geometry g = ob.noisy.geometry();
  // Under iid noise input the prior does not depend on the noise draw.
  const KernelMatrix prior = o.input_mode == "noise"
                                 ? forward_covariance(arch, noise_input_covariance(g), g).output()
                                 : forward_covariance(arch, ob.noisy).output();
  // Observation noise in normalized units; defaults to the synthetic noise level.
  const double sn = o.noise_sigma.value_or(o.image.sigma) / 255.0;
  const GpPosterior post = gp_posterior(prior, ob.noisy, sn);
  if (!o.out.empty()) save_png(post.mean, o.out);
  json details = {{"jitter_added", post.jitter_added}, {"noise_sigma", sn * 255.0}};
  double p = 0.0;
  if (ob.oracle) {
    p = psnr(post.mean, *ob.oracle);
    details["psnr_noisy"] = psnr(ob.noisy, *ob.oracle);
  }
  const Eigen::VectorXd m = post.mean.channel_vector(0);
  const Eigen::VectorXd yv = ob.noisy.channel_vector(0);
  details["mean_spatial_std"] = std::sqrt((m.array() - m.mean()).square().mean());
  details["input_spatial_std"] = std::sqrt((yv.array() - yv.mean()).square().mean());
  details["mean_value"] = m.mean();
  details["input_mean_value"] = yv.mean();
  json cfg = {{"image", image_config(o.image)}, {"arch", arch_to_json(arch)},
              {"input_mode", o.input_mode}, {"noise_sigma", sn}};
  emit_summary("gp", cfg, p, 0, start, details, o.summary, out);
  return kOk;
}

void apply_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("NTK_THREADS")) {
      try {
        threads = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("NTK_THREADS is not an integer: ") + env);
      }
    }
  }
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Closed-form NTK filters for single-image denoising"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (falls back to NTK_THREADS)");

  DenoiseOptions dn;
  auto* denoise = app.add_subcommand("denoise", "Twicing with the network's NTK filter");
  add_image_options(denoise, dn.image);
  add_arch_options(denoise, dn.arch);
  denoise->add_option("--mode", dn.mode, "full or nystrom")->check(CLI::IsMember({"full", "nystrom"}));
  denoise->add_option("--basis", dn.basis, "Nystrom eigenimages: orthonormal or extended")
      ->check(CLI::IsMember({"orthonormal", "extended"}));
  denoise->add_option("--fraction", dn.fraction, "Sampled column fraction m/d");
  denoise->add_option("--max-iters", dn.max_iters, "Twicing iteration cap");
  denoise->add_option("--out", dn.output.out, "Denoised PNG");
  denoise->add_option("--metrics", dn.output.metrics, "Trace CSV");
  denoise->add_option("--summary", dn.output.summary, "Summary JSON");

  SimulateOptions sm;
  auto* simulate = app.add_subcommand("simulate", "Train a finite-width network on one image");
  add_image_options(simulate, sm.image);
  add_arch_options(simulate, sm.arch);
  simulate->add_option("--optimizer", sm.optimizer, "gd or adam")->check(CLI::IsMember({"gd", "adam"}));
  simulate->add_option("--input-mode", sm.input_mode, "image or noise")
      ->check(CLI::IsMember({"image", "noise"}));
  simulate->add_option("--channels", sm.channels, "Hidden width");
  simulate->add_option("--iters", sm.iters, "Training iterations");
  simulate->add_option("--telemetry-every", sm.telemetry_every, "Telemetry interval");
  simulate->add_option("--lr", sm.lr, "Adam learning rate");
  simulate->add_option("--gamma", sm.gamma, "GD step as a fraction of 1 / lambda_max(J J^T)");
  simulate->add_option("--noise-input-std", sm.noise_input_std, "Scale of the random network input");
  simulate->add_option("--eigenimages", sm.eigenimages, "Save this many preactivation eigenimages");
  simulate->add_option("--out-dir", sm.out_dir, "Directory for telemetry and images");
  simulate->add_option("--summary", sm.summary, "Summary JSON");

  KernelOptions kn;
  auto* kernel = app.add_subcommand("kernel", "Compute and export the analytic NTK filter");
  add_image_options(kernel, kn.image);
  add_arch_options(kernel, kn.arch);
  kernel->add_option("--input-mode", kn.input_mode, "image or noise")->check(CLI::IsMember({"image", "noise"}));
  kernel->add_option("--out", kn.out, "Binary matrix file");
  kernel->add_option("--csv", kn.csv, "CSV matrix file");
  kernel->add_option("--eigen-dir", kn.eigen_dir, "Directory for eigenimage PNGs");
  kernel->add_option("--eigenimages", kn.eigenimages, "Number of eigenimages to save");
  kernel->add_option("--summary", kn.summary, "Summary JSON");

  NlmOptions nl;
  auto* nlm = app.add_subcommand("nlm", "Global non-local means baseline");
  add_image_options(nlm, nl.image);
  nlm->add_option("--patch-radius", nl.patch_radius, "Patch radius");
  nlm->add_option("--bandwidth", nl.bandwidth, "Kernel bandwidth sigma^2 (normalized units)")
      ->check(CLI::PositiveNumber);
  nlm->add_option("--out", nl.out, "Filtered PNG");
  nlm->add_option("--summary", nl.summary, "Summary JSON");

  GpOptions gpo;
  auto* gp = app.add_subcommand("gp", "Gaussian-process posterior mean under the network prior");
  add_image_options(gp, gpo.image);
  add_arch_options(gp, gpo.arch);
  gp->add_option("--input-mode", gpo.input_mode, "image or noise")->check(CLI::IsMember({"image", "noise"}));
  gp->add_option("--noise-sigma", gpo.noise_sigma, "Observation noise level (8-bit units)");
  gp->add_option("--out", gpo.out, "Posterior mean PNG");
  gp->add_option("--summary", gpo.summary, "Summary JSON");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    apply_threads(threads);
    if (*denoise) return cmd_denoise(dn, out);
    if (*simulate) return cmd_simulate(sm, out);
    if (*kernel) return cmd_kernel(kn, out);
    if (*nlm) return cmd_nlm(nl, out);
    if (*gp) return cmd_gp(gpo, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ShapeError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DivergenceError& e) {
    err << "divergence at iteration " << e.iteration() << ": " << e.what() << '\n';
    return kDivergence;
  } catch (const UnsupportedArchitecture& e) {
    err << "unsupported architecture: " << e.what() << '\n';
    return kUnsupportedArchitecture;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace ntkf::cli

// Command-line front end over the C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aorecon/aorecon.h"

namespace {

using nlohmann::json;

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct CliError {
  int code;
  std::string message;
};

[[noreturn]] void invalid(const std::string& what) { throw CliError{kExitValidation, what}; }

void check(aor_status s) {
  if (s == AOR_OK) return;
  const std::string msg = aor_last_error();
  if (s == AOR_ERR_NUMERICAL) throw CliError{kExitNumerical, msg};
  if (s == AOR_ERR_INTERNAL) throw CliError{1, msg};
  throw CliError{kExitValidation, msg};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Phantom = std::unique_ptr<aor_phantom, Deleter<aor_phantom, aor_phantom_free>>;
using Field = std::unique_ptr<aor_field, Deleter<aor_field, aor_field_free>>;
using Trace = std::unique_ptr<aor_trace, Deleter<aor_trace, aor_trace_free>>;
using Sinogram = std::unique_ptr<aor_sinogram, Deleter<aor_sinogram, aor_sinogram_free>>;
using Masks = std::unique_ptr<aor_masks, Deleter<aor_masks, aor_masks_free>>;
using Reconstruction = std::unique_ptr<aor_reconstruction, Deleter<aor_reconstruction, aor_reconstruction_free>>;

// Settings shared by the commands; the JSON config fills them, command-line flags override.
struct Settings {
  std::optional<int> n;
  aor_acoustic_config acoustic{};
  int ny = 64;
  int nr = 128;
  double l = 0.1;
  double g = 1.0;
  std::optional<std::string> phantom;
  aor_reconstruction_options reconstruction{};
  std::uint64_t seed = 1;
  std::string output = ".";
};

double number_at(const json& j, const char* key, const std::string& where) {
  if (!j.at(key).is_number()) invalid("config field " + where + "." + key + " must be a number");
  return j.at(key).get<double>();
}

void load_config(const std::string& path, Settings& s) {
  std::ifstream in(path);
  if (!in) invalid("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    invalid("config " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) invalid("config must be a JSON object");
  if (j.contains("grid")) {
    const json& g = j["grid"];
    if (!g.contains("n") || !g["n"].is_number_integer()) invalid("config field grid.n must be an integer");
    s.n = g["n"].get<int>();
  }
  if (j.contains("acoustic")) {
    const json& a = j["acoustic"];
    for (auto [key, dst] : {std::pair{"mu", &s.acoustic.mu}, std::pair{"r0", &s.acoustic.r0},
                            std::pair{"R", &s.acoustic.R}, std::pair{"eta", &s.acoustic.eta}})
      if (a.contains(key)) *dst = number_at(a, key, "acoustic");
    if (a.contains("ny")) s.ny = static_cast<int>(number_at(a, "ny", "acoustic"));
    if (a.contains("nr")) s.nr = static_cast<int>(number_at(a, "nr", "acoustic"));
  }
  if (j.contains("optics")) {
    const json& o = j["optics"];
    if (o.contains("l")) s.l = number_at(o, "l", "optics");
    if (o.contains("g")) {
      s.g = number_at(o, "g", "optics");
      if (s.g != 1.0) invalid("config field optics.g: only the constant illumination g = 1 is supported");
    }
  }
  if (j.contains("phantom")) {
    if (!j["phantom"].is_string()) invalid("config field phantom must be a path");
    const std::filesystem::path p = j["phantom"].get<std::string>();
    s.phantom = (p.is_relative() ? std::filesystem::path(path).parent_path() / p : p).string();
  }
  if (j.contains("reconstruction")) {
    const json& r = j["reconstruction"];
    auto mode = [&](const char* key, double& dst) {
      if (!r.contains(key)) return;
      if (r[key].is_string() && r[key] == "auto") {
        dst = 0.0;
      } else if (r[key].is_number() && r[key].get<double>() > 0.0) {
        dst = r[key].get<double>();
      } else {
        invalid(std::string("config field reconstruction.") + key + " must be \"auto\" or a positive number");
      }
    };
    mode("theta", s.reconstruction.theta);
    mode("tau", s.reconstruction.tau);
    if (r.contains("max_iter")) s.reconstruction.max_iter = static_cast<int>(number_at(r, "max_iter", "reconstruction"));
    if (r.contains("stop_tol")) s.reconstruction.stop_tol = number_at(r, "stop_tol", "reconstruction");
    if (r.contains("partition_step"))
      s.reconstruction.partition_step = number_at(r, "partition_step", "reconstruction");
    if (r.contains("lower")) s.reconstruction.lower = number_at(r, "lower", "reconstruction");
    if (r.contains("upper")) s.reconstruction.upper = number_at(r, "upper", "reconstruction");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) invalid("config field seed must be a non-negative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("output")) {
    if (!j["output"].is_string()) invalid("config field output must be a path");
    s.output = j["output"].get<std::string>();
  }
}

int need_n(const Settings& s) {
  if (!s.n) invalid("missing grid size: pass --n or set grid.n in the config");
  return *s.n;
}

std::string need(const std::string& value, const std::string& field) {
  if (value.empty()) invalid("missing input: " + field);
  return value;
}

Phantom load_phantom(const Settings& s, const std::string& flag) {
  const std::string path = !flag.empty() ? flag : s.phantom.value_or("");
  aor_phantom* p = nullptr;
  check(aor_phantom_load(need(path, "phantom (--phantom or config field phantom)").c_str(), &p));
  return Phantom(p);
}

std::string in_output(const Settings& s, const std::string& file) {
  std::filesystem::path p = file;
  if (p.is_absolute() || s.output == ".") return p.string();
  std::filesystem::create_directories(s.output);
  return (std::filesystem::path(s.output) / p).string();
}

struct LogColumns {
  std::vector<double> residual, distance;
};

LogColumns read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot open log " + path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("iter,residual_Hstar", 0) != 0) invalid(path + " is not a reconstruction log");
  LogColumns c;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string it, res, dist;
    std::getline(ss, it, ',');
    std::getline(ss, res, ',');
    std::getline(ss, dist, ',');
    try {
      c.residual.push_back(std::stod(res));
      if (!dist.empty()) c.distance.push_back(std::stod(dist));
    } catch (const std::exception&) {
      invalid(path + ": malformed line '" + line + "'");
    }
  }
  return c;
}

void print_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) invalid("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acousto-optic reconstruction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("aorecon ") + aor_version() + " (schema " +
                                        std::to_string(aor_schema_version()) + ")");
  Settings s;
  aor_acoustic_config_default(&s.acoustic);
  aor_reconstruction_options_default(&s.reconstruction);
  std::string config;
  app.add_option("--config", config, "JSON experiment config")->check(CLI::ExistingFile);

  // flags that override the config, applied after it is loaded
  std::optional<int> n_flag;
  auto add_grid = [&](CLI::App* c) { c->add_option("--n", n_flag, "grid nodes per axis"); };
  std::optional<double> mu, r0, R, eta, l_flag;
  std::optional<int> ny, nr;
  auto add_acoustic = [&](CLI::App* c) {
    c->add_option("--mu", mu, "source circle radius");
    c->add_option("--r0", r0, "inner radius");
    c->add_option("--R", R, "outer radius");
    c->add_option("--eta", eta, "wavefront thickness");
    c->add_option("--ny", ny, "number of sources");
    c->add_option("--nr", nr, "number of radii");
  };

  auto* gen_group = app.add_subcommand("phantom", "phantom utilities");
  gen_group->require_subcommand(1);
  auto* gen = gen_group->add_subcommand("gen", "write a preset phantom");
  std::string preset = "disk", gen_out;
  std::optional<std::uint64_t> seed_flag;
  gen->add_option("--preset", preset, "empty, disk, two-disk, ellipse, random");
  gen->add_option("--seed", seed_flag, "seed for the random preset");
  gen->add_option("-o,--out", gen_out, "output JSON")->required();

  auto* fwd = app.add_subcommand("forward", "optical forward solve");
  std::string fwd_phantom, fwd_phi, fwd_flux;
  fwd->add_option("--phantom", fwd_phantom, "phantom JSON");
  fwd->add_option("--l", l_flag, "extrapolation length");
  fwd->add_option("--phi", fwd_phi, "output field for Phi");
  fwd->add_option("--flux", fwd_flux, "output boundary flux")->required();
  add_grid(fwd);

  auto* sino = app.add_subcommand("sinogram", "acousto-optic measurements");
  std::string sino_phantom, sino_out, sino_kind = "m_eta";
  sino->add_option("--phantom", sino_phantom, "phantom JSON");
  sino->add_option("--kind", sino_kind, "m_eta, m_tilde or ideal")
      ->check(CLI::IsMember({"m_eta", "m_tilde", "ideal"}));
  sino->add_option("-o,--out", sino_out, "output CSV")->required();
  add_grid(sino);
  add_acoustic(sino);

  auto* rec_psi = app.add_subcommand("recover-psi", "psi from measurements");
  std::string rp_sino, rp_out, rp_phantom;
  double rp_eps = 1e-6;
  bool rp_truth = false;
  rec_psi->add_option("--sinogram", rp_sino, "measurement CSV");
  rec_psi->add_option("--eps", rp_eps, "Tikhonov weight");
  rec_psi->add_flag("--ground-truth", rp_truth, "compute psi from the phantom instead of data");
  rec_psi->add_option("--phantom", rp_phantom, "phantom JSON for --ground-truth");
  rec_psi->add_option("-o,--out", rp_out, "output field")->required();
  add_grid(rec_psi);
  add_acoustic(rec_psi);

  auto* seg = app.add_subcommand("segment", "inclusion masks from psi");
  std::string seg_psi, seg_prefix = "mask";
  double seg_threshold = 0.0, seg_margin = 0.15;
  int seg_min_area = 9;
  seg->add_option("--psi", seg_psi, "psi field");
  seg->add_option("--prefix", seg_prefix, "mask files are <prefix>_<k>.pgm");
  seg->add_option("--threshold", seg_threshold, "edge threshold on h|grad psi| (default Otsu)");
  seg->add_option("--min-area", seg_min_area, "smallest kept component in nodes");
  seg->add_option("--d-margin", seg_margin, "D = [m, 1-m]^2");

  auto* rec = app.add_subcommand("reconstruct", "projected Landweber reconstruction");
  std::vector<std::string> rec_masks;
  std::string rec_psi_path, rec_flux, rec_truth, rec_out = "coefficient.aorf", rec_log = "reconstruction.csv";
  double rec_a0 = 1.0;
  std::optional<int> max_iter;
  std::optional<double> stop_tol, theta, tau, step;
  rec->add_option("--masks", rec_masks, "mask PGM files");
  rec->add_option("--psi", rec_psi_path, "psi field");
  rec->add_option("--flux", rec_flux, "measured boundary flux");
  rec->add_option("--truth", rec_truth, "true coefficient for the distance column");
  rec->add_option("--a0", rec_a0, "background coefficient");
  rec->add_option("--l", l_flag, "extrapolation length");
  rec->add_option("--max-iter", max_iter, "Landweber iterations");
  rec->add_option("--stop-tol", stop_tol, "relative residual stop");
  rec->add_option("--theta", theta, "L4 budget (default from optical bounds)");
  rec->add_option("--tau", tau, "step (default 0.9 / L^2)");
  rec->add_option("--partition-step", step, "lattice step of the exhaustion guess");
  rec->add_option("-o,--out", rec_out, "output coefficient field");
  rec->add_option("--log", rec_log, "output log CSV");

  auto* ev = app.add_subcommand("evaluate", "metrics against a phantom");
  std::string ev_coef, ev_phantom, ev_log, ev_out;
  std::vector<std::string> ev_masks;
  ev->add_option("--coefficient", ev_coef, "reconstructed coefficient field");
  ev->add_option("--phantom", ev_phantom, "true phantom JSON");
  ev->add_option("--masks", ev_masks, "mask PGM files");
  ev->add_option("--log", ev_log, "reconstruction log CSV");
  ev->add_option("-o,--out", ev_out, "metrics JSON (default stdout)");

  auto* ex = app.add_subcommand("export", "convert fields");
  std::string ex_field, ex_pgm;
  ex->add_option("--field", ex_field, "input field")->required();
  ex->add_option("--pgm", ex_pgm, "P5 output with min/max mapped to 0/255")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (!config.empty()) load_config(config, s);
    if (n_flag) s.n = n_flag;
    if (mu) s.acoustic.mu = *mu;
    if (r0) s.acoustic.r0 = *r0;
    if (R) s.acoustic.R = *R;
    if (eta) s.acoustic.eta = *eta;
    if (ny) s.ny = *ny;
    if (nr) s.nr = *nr;
    if (l_flag) s.l = *l_flag;
    if (seed_flag) s.seed = *seed_flag;
    if (max_iter) s.reconstruction.max_iter = *max_iter;
    if (stop_tol) s.reconstruction.stop_tol = *stop_tol;
    if (theta) s.reconstruction.theta = *theta;
    if (tau) s.reconstruction.tau = *tau;
    if (step) s.reconstruction.partition_step = *step;

    if (*gen) {
      aor_phantom* p = nullptr;
      check(aor_phantom_preset(preset.c_str(), s.seed, &p));
      Phantom ph(p);
      check(aor_phantom_save(ph.get(), in_output(s, gen_out).c_str()));
    } else if (*fwd) {
      Phantom ph = load_phantom(s, fwd_phantom);
      aor_field* phi = nullptr;
      aor_trace* flux = nullptr;
      check(aor_forward(ph.get(), need_n(s), s.l, &phi, &flux));
      Field f(phi);
      Trace t(flux);
      check(aor_trace_write(t.get(), in_output(s, fwd_flux).c_str()));
      if (!fwd_phi.empty()) check(aor_field_write(f.get(), in_output(s, fwd_phi).c_str()));
    } else if (*sino) {
      Phantom ph = load_phantom(s, sino_phantom);
      aor_sinogram* out = nullptr;
      if (sino_kind == "ideal") {
        check(aor_ideal_measurements(ph.get(), need_n(s), &s.acoustic, s.ny, s.nr, &out));
      } else {
        const aor_measurement_kind k = sino_kind == "m_tilde" ? AOR_M_TILDE : AOR_M_ETA;
        check(aor_measure(ph.get(), need_n(s), &s.acoustic, s.ny, s.nr, k, &out));
      }
      Sinogram sg(out);
      check(aor_sinogram_write_csv(sg.get(), in_output(s, sino_out).c_str()));
    } else if (*rec_psi) {
      aor_field* psi = nullptr;
      if (rp_truth) {
        Phantom ph = load_phantom(s, rp_phantom);
        check(aor_ground_truth_psi(ph.get(), need_n(s), s.l, &psi));
      } else {
        aor_sinogram* m = nullptr;
        check(aor_sinogram_read_csv(need(rp_sino, "--sinogram").c_str(), &s.acoustic, &m));
        Sinogram sg(m);
        check(aor_recover_psi(sg.get(), need_n(s), rp_eps, &psi));
      }
      Field f(psi);
      check(aor_field_write(f.get(), in_output(s, rp_out).c_str()));
    } else if (*seg) {
      aor_field* psi = nullptr;
      check(aor_field_read(need(seg_psi, "--psi").c_str(), &psi));
      Field f(psi);
      aor_masks* m = nullptr;
      check(aor_segment(f.get(), seg_threshold, seg_min_area, seg_margin, &m));
      Masks masks(m);
      json out = json::array();
      for (size_t k = 0; k < aor_masks_count(masks.get()); ++k) {
        const std::string path = in_output(s, seg_prefix + "_" + std::to_string(k + 1) + ".pgm");
        check(aor_masks_write_pgm(masks.get(), k, path.c_str()));
        size_t area = 0;
        check(aor_masks_area(masks.get(), k, &area));
        out.push_back({{"file", path}, {"area_nodes", area}});
      }
      print_json(json{{"count", aor_masks_count(masks.get())}, {"masks", out}}, "");
    } else if (*rec) {
      aor_field* psi = nullptr;
      check(aor_field_read(need(rec_psi_path, "--psi").c_str(), &psi));
      Field fpsi(psi);
      aor_trace* flux = nullptr;
      check(aor_trace_read(need(rec_flux, "--flux").c_str(), &flux));
      Trace tflux(flux);
      if (rec_masks.empty()) invalid("missing input: --masks");
      std::vector<const char*> paths;
      for (const auto& p : rec_masks) paths.push_back(p.c_str());
      aor_masks* m = nullptr;
      check(aor_masks_read_pgm(paths.data(), paths.size(), aor_field_n(fpsi.get()), &m));
      Masks masks(m);
      Field truth;
      if (!rec_truth.empty()) {
        aor_field* t = nullptr;
        check(aor_field_read(rec_truth.c_str(), &t));
        truth.reset(t);
      }
      aor_reconstruction* r = nullptr;
      check(aor_reconstruct(masks.get(), fpsi.get(), tflux.get(), rec_a0, s.l, &s.reconstruction, truth.get(), &r));
      Reconstruction res(r);
      aor_field* coef = nullptr;
      check(aor_reconstruction_coefficient(res.get(), &coef));
      Field fc(coef);
      check(aor_field_write(fc.get(), in_output(s, rec_out).c_str()));
      check(aor_reconstruction_write_log(res.get(), in_output(s, rec_log).c_str()));
      std::vector<double> alpha(aor_reconstruction_constants(res.get(), nullptr, 0));
      aor_reconstruction_constants(res.get(), alpha.data(), alpha.size());
      print_json(json{{"iterations", aor_reconstruction_iterations(res.get())},
                      {"residual_final", aor_reconstruction_residual(res.get())},
                      {"theta", aor_reconstruction_theta(res.get())},
                      {"tau", aor_reconstruction_tau(res.get())},
                      {"constants", alpha},
                      {"diagnostic", aor_reconstruction_diagnostic(res.get())}},
                 "");
    } else if (*ev) {
      Phantom ph = load_phantom(s, ev_phantom);
      aor_field* c = nullptr;
      check(aor_field_read(need(ev_coef, "--coefficient").c_str(), &c));
      Field coef(c);
      aor_field* t = nullptr;
      check(aor_phantom_sample(ph.get(), aor_field_n(coef.get()), &t));
      Field truth(t);
      double l2 = 0.0;
      check(aor_l2_relative_error(coef.get(), truth.get(), &l2));
      json metrics{{"l2_rel_error", l2}, {"hausdorff_boundary", nullptr}, {"residual_final", nullptr},
                   {"monotone_fraction", nullptr}};
      if (!ev_masks.empty()) {
        std::vector<const char*> paths;
        for (const auto& p : ev_masks) paths.push_back(p.c_str());
        aor_masks* m = nullptr;
        check(aor_masks_read_pgm(paths.data(), paths.size(), aor_field_n(coef.get()), &m));
        Masks masks(m);
        double hd = 0.0;
        check(aor_masks_hausdorff(masks.get(), ph.get(), &hd));
        metrics["hausdorff_boundary"] = hd;
      }
      if (!ev_log.empty()) {
        const LogColumns log = read_log(ev_log);
        if (!log.residual.empty()) metrics["residual_final"] = log.residual.back();
        if (log.distance.size() == log.residual.size() && log.residual.size() > 1) {
          int accepted = 0, decreasing = 0;
          for (std::size_t k = 0; k + 1 < log.residual.size(); ++k) {
            if (log.residual[k + 1] > log.residual[k]) continue;
            ++accepted;
            decreasing += log.distance[k + 1] < log.distance[k];
          }
          metrics["monotone_fraction"] = accepted ? static_cast<double>(decreasing) / accepted : 1.0;
        }
      }
      print_json(metrics, ev_out.empty() ? "" : in_output(s, ev_out));
    } else if (*ex) {
      aor_field* f = nullptr;
      check(aor_field_read(ex_field.c_str(), &f));
      Field field(f);
      check(aor_field_write_pgm(field.get(), in_output(s, ex_pgm).c_str()));
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include "aorecon/aorecon.h"

#include <cstring>
#include <new>
#include <string>

#include "aorecon/acousto.hpp"
#include "aorecon/diffusion.hpp"
#include "aorecon/helmholtz.hpp"
#include "aorecon/inversion.hpp"
#include "aorecon/phantom.hpp"
#include "aorecon/radon.hpp"
#include "aorecon/segmentation.hpp"

#ifndef AORECON_VERSION
#define AORECON_VERSION "0.0.0"
#endif

using namespace aorecon;

struct aor_phantom {
  Phantom value;
};
struct aor_field {
  ScalarField value;
};
struct aor_trace {
  BoundaryTrace value;
};
struct aor_sinogram {
  Sinogram value;
};
struct aor_masks {
  Grid grid;
  std::vector<Mask> masks;
};
struct aor_reconstruction {
  PipelineResult value;
};

namespace {

thread_local std::string last_error;

aor_status fail(aor_status s, const std::string& what) {
  last_error = what;
  return s;
}

template <class Fn>
aor_status guard(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return AOR_OK;
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::validation:
        return fail(AOR_ERR_VALIDATION, e.what());
      case ErrorKind::numerical:
        return fail(AOR_ERR_NUMERICAL, e.what());
      case ErrorKind::io:
        return fail(AOR_ERR_IO, e.what());
      case ErrorKind::invalid_argument:
        return fail(AOR_ERR_INVALID_ARGUMENT, e.what());
    }
    return fail(AOR_ERR_INTERNAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(AOR_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(AOR_ERR_INTERNAL, e.what());
  }
}

template <class T>
void require(const T* p, const char* name) {
  if (!p) throw InvalidArgument(std::string(name) + " is null");
}

AcousticConfig to_config(const aor_acoustic_config* c) {
  AcousticConfig out;
  if (c) {
    out.mu = c->mu;
    out.r0 = c->r0;
    out.R = c->R;
    out.eta = c->eta;
  }
  out.validate();
  return out;
}

Grid make_grid(int n) {
  if (n < 17) throw ValidationError("grid n must be at least 17");
  return Grid(n);
}

ScalarField forward_phi(const Phantom& p, const Grid& g, double l) {
  return solve_T({sample(p, g), constant_trace(g, 1.0), l}).phi;
}

}  // namespace

extern "C" {

const char* aor_last_error(void) { return last_error.c_str(); }
const char* aor_version(void) { return AORECON_VERSION; }
int aor_schema_version(void) { return AOR_SCHEMA_VERSION; }

void aor_acoustic_config_default(aor_acoustic_config* out) {
  if (!out) return;
  const AcousticConfig c;
  *out = {c.mu, c.r0, c.R, c.eta};
}

void aor_reconstruction_options_default(aor_reconstruction_options* out) {
  if (!out) return;
  const PipelineOptions o;
  *out = {o.exhaustion.lower, o.exhaustion.upper, o.exhaustion.step, 0.0, 0.0, o.landweber.max_iter,
          o.landweber.stop_tol, o.erosion, o.refit ? 1 : 0};
}

void aor_string_free(char* s) { delete[] s; }

aor_status aor_phantom_preset(const char* name, uint64_t seed, aor_phantom** out) {
  return guard([&] {
    require(name, "name");
    require(out, "out");
    *out = new aor_phantom{phantom_preset(name, seed)};
  });
}

aor_status aor_phantom_load(const char* path, aor_phantom** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new aor_phantom{load_phantom(path)};
  });
}

aor_status aor_phantom_from_json(const char* text, aor_phantom** out) {
  return guard([&] {
    require(text, "text");
    require(out, "out");
    *out = new aor_phantom{parse_phantom_json(text)};
  });
}

aor_status aor_phantom_to_json(const aor_phantom* p, char** out) {
  return guard([&] {
    require(p, "phantom");
    require(out, "out");
    const std::string s = phantom_to_json(p->value);
    char* buf = new char[s.size() + 1];
    std::memcpy(buf, s.c_str(), s.size() + 1);
    *out = buf;
  });
}

aor_status aor_phantom_save(const aor_phantom* p, const char* path) {
  return guard([&] {
    require(p, "phantom");
    require(path, "path");
    save_phantom(path, p->value);
  });
}

size_t aor_phantom_count(const aor_phantom* p) { return p ? p->value.count() : 0; }

aor_status aor_phantom_sample(const aor_phantom* p, int n, aor_field** out) {
  return guard([&] {
    require(p, "phantom");
    require(out, "out");
    *out = new aor_field{sample(p->value, make_grid(n))};
  });
}

void aor_phantom_free(aor_phantom* p) { delete p; }

aor_status aor_field_create(int n, const double* values, aor_field** out) {
  return guard([&] {
    require(out, "out");
    const Grid g = make_grid(n);
    ScalarField f(g);
    if (values) f.values.assign(values, values + g.size());
    *out = new aor_field{std::move(f)};
  });
}

aor_status aor_field_read(const char* path, aor_field** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new aor_field{read_scalar_field(path)};
  });
}

aor_status aor_field_write(const aor_field* f, const char* path) {
  return guard([&] {
    require(f, "field");
    require(path, "path");
    write_field(path, f->value);
  });
}

aor_status aor_field_write_pgm(const aor_field* f, const char* path) {
  return guard([&] {
    require(f, "field");
    require(path, "path");
    write_field_pgm(path, f->value);
  });
}

int aor_field_n(const aor_field* f) { return f ? f->value.grid.n() : 0; }
const double* aor_field_values(const aor_field* f) { return f ? f->value.values.data() : nullptr; }
void aor_field_free(aor_field* f) { delete f; }

aor_status aor_trace_read(const char* path, aor_trace** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    AnyField any = read_field(path);
    auto* t = std::get_if<BoundaryTrace>(&any);
    if (!t) throw IoError(std::string(path) + " does not hold a boundary trace");
    *out = new aor_trace{std::move(*t)};
  });
}

aor_status aor_trace_write(const aor_trace* t, const char* path) {
  return guard([&] {
    require(t, "trace");
    require(path, "path");
    write_field(path, t->value);
  });
}

size_t aor_trace_size(const aor_trace* t) { return t ? t->value.values.size() : 0; }
const double* aor_trace_values(const aor_trace* t) { return t ? t->value.values.data() : nullptr; }
void aor_trace_free(aor_trace* t) { delete t; }

aor_status aor_forward(const aor_phantom* p, int n, double l, aor_field** phi, aor_trace** flux) {
  return guard([&] {
    require(p, "phantom");
    p->value.validate();
    const Grid g = make_grid(n);
    OpticalSolution s = solve_T({sample(p->value, g), constant_trace(g, 1.0), l});
    if (phi) *phi = new aor_field{std::move(s.phi)};
    if (flux) *flux = new aor_trace{std::move(s.flux)};
  });
}

aor_status aor_measure(const aor_phantom* p, int n, const aor_acoustic_config* c, int ny, int nr,
                       aor_measurement_kind kind, aor_sinogram** out) {
  return guard([&] {
    require(p, "phantom");
    require(out, "out");
    const Grid g = make_grid(n);
    const AcousticConfig config = to_config(c);
    const MeasurementContext ctx(p->value, g, config);
    const MeasurementKind k = kind == AOR_M_TILDE ? MeasurementKind::m_tilde : MeasurementKind::m_eta;
    *out = new aor_sinogram{sample_sinogram(ctx, ny, nr, k)};
  });
}

aor_status aor_ideal_measurements(const aor_phantom* p, int n, const aor_acoustic_config* c, int ny, int nr,
                                  aor_sinogram** out) {
  return guard([&] {
    require(p, "phantom");
    require(out, "out");
    p->value.validate();
    const Grid g = make_grid(n);
    const WeakVectorFunctional U(p->value, forward_phi(p->value, g, 0.1));
    *out = new aor_sinogram{ideal_measurements(U, to_config(c), ny, nr)};
  });
}

aor_status aor_sinogram_read_csv(const char* path, const aor_acoustic_config* c, aor_sinogram** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new aor_sinogram{read_sinogram_csv(path, to_config(c))};
  });
}

aor_status aor_sinogram_write_csv(const aor_sinogram* s, const char* path) {
  return guard([&] {
    require(s, "sinogram");
    require(path, "path");
    write_sinogram_csv(path, s->value);
  });
}

int aor_sinogram_ny(const aor_sinogram* s) { return s ? s->value.ny : 0; }
int aor_sinogram_nr(const aor_sinogram* s) { return s ? s->value.nr : 0; }
const double* aor_sinogram_values(const aor_sinogram* s) { return s ? s->value.values.data() : nullptr; }
void aor_sinogram_free(aor_sinogram* s) { delete s; }

aor_status aor_recover_psi(const aor_sinogram* m, int n, double eps, aor_field** out) {
  return guard([&] {
    require(m, "sinogram");
    require(out, "out");
    if (!(eps > 0.0)) throw ValidationError("eps must be positive");
    *out = new aor_field{psi_from_measurements(m->value, make_grid(n), eps).psi};
  });
}

aor_status aor_ground_truth_psi(const aor_phantom* p, int n, double l, aor_field** out) {
  return guard([&] {
    require(p, "phantom");
    require(out, "out");
    p->value.validate();
    const Grid g = make_grid(n);
    *out = new aor_field{ground_truth_psi(p->value, forward_phi(p->value, g, l)).psi};
  });
}

aor_status aor_segment(const aor_field* psi, double threshold, int min_area, double d_margin, aor_masks** out) {
  return guard([&] {
    require(psi, "psi");
    require(out, "out");
    const ScalarField& f = psi->value;
    const Mask edges = detect_edges(f, threshold > 0.0 ? std::optional<double>(threshold) : std::nullopt);
    SegmentationOptions o;
    o.min_area = min_area;
    o.d_margin = d_margin;
    auto* m = new aor_masks{f.grid, {}};
    for (InclusionMask& inc : extract_inclusions(f.grid, edges, &f, o)) m->masks.push_back(std::move(inc.mask));
    *out = m;
  });
}

aor_status aor_masks_from_phantom(const aor_phantom* p, int n, aor_masks** out) {
  return guard([&] {
    require(p, "phantom");
    require(out, "out");
    const Grid g = make_grid(n);
    auto* m = new aor_masks{g, std::vector<Mask>(p->value.count(), Mask(g.size(), 0))};
    for (std::size_t k = 0; k < g.size(); ++k) {
      const int j = p->value.inclusion_at(g.node(k));
      if (j >= 0) m->masks[j][k] = 1;
    }
    *out = m;
  });
}

aor_status aor_masks_read_pgm(const char* const* paths, size_t count, int n, aor_masks** out) {
  return guard([&] {
    require(out, "out");
    if (count && !paths) throw InvalidArgument("paths is null");
    const Grid g = make_grid(n);
    auto m = std::make_unique<aor_masks>(aor_masks{g, {}});
    for (size_t i = 0; i < count; ++i) m->masks.push_back(read_pgm(paths[i], g));
    *out = m.release();
  });
}

aor_status aor_masks_write_pgm(const aor_masks* m, size_t index, const char* path) {
  return guard([&] {
    require(m, "masks");
    require(path, "path");
    if (index >= m->masks.size()) throw InvalidArgument("mask index out of range");
    write_pgm(path, m->grid, m->masks[index]);
  });
}

size_t aor_masks_count(const aor_masks* m) { return m ? m->masks.size() : 0; }
int aor_masks_n(const aor_masks* m) { return m ? m->grid.n() : 0; }

aor_status aor_masks_area(const aor_masks* m, size_t index, size_t* nodes) {
  return guard([&] {
    require(m, "masks");
    require(nodes, "nodes");
    if (index >= m->masks.size()) throw InvalidArgument("mask index out of range");
    *nodes = static_cast<size_t>(std::count(m->masks[index].begin(), m->masks[index].end(), 1));
  });
}

aor_status aor_masks_hausdorff(const aor_masks* m, const aor_phantom* p, double* out) {
  return guard([&] {
    require(m, "masks");
    require(p, "phantom");
    require(out, "out");
    if (m->masks.size() != p->value.count())
      throw ValidationError("mask count " + std::to_string(m->masks.size()) + " differs from inclusion count " +
                            std::to_string(p->value.count()));
    double worst = 0.0;
    for (const Mask& mask : m->masks) {
      InclusionMask inc = inclusion_mask(m->grid, mask);
      const Point c = inc.centroid();
      std::size_t best = 0;
      double bd = INFINITY;
      for (std::size_t j = 0; j < p->value.count(); ++j) {
        const Point q = p->value.inclusions[j].center;
        const double d = std::hypot(q.x - c.x, q.y - c.y);
        if (d < bd) bd = d, best = j;
      }
      worst = std::max(worst, hausdorff(boundary_points(inc), rim_points(p->value.inclusions[best])));
    }
    *out = worst;
  });
}

void aor_masks_free(aor_masks* m) { delete m; }

aor_status aor_reconstruct(const aor_masks* masks, const aor_field* psi, const aor_trace* flux, double a0, double l,
                           const aor_reconstruction_options* o, const aor_field* truth, aor_reconstruction** out) {
  return guard([&] {
    require(masks, "masks");
    require(psi, "psi");
    require(flux, "flux");
    require(out, "out");
    aor_reconstruction_options opt;
    aor_reconstruction_options_default(&opt);
    if (o) opt = *o;
    PipelineOptions p;
    p.exhaustion.lower = opt.lower;
    p.exhaustion.upper = opt.upper;
    p.exhaustion.step = opt.partition_step;
    p.exhaustion.coordinate_descent = masks->masks.size() > 3;
    if (opt.theta > 0.0) p.theta = opt.theta;
    if (opt.tau > 0.0) p.landweber.tau = opt.tau;
    if (opt.max_iter < 0) throw ValidationError("max_iter must be non-negative");
    p.landweber.max_iter = opt.max_iter;
    p.landweber.stop_tol = opt.stop_tol;
    p.erosion = opt.erosion;
    p.refit = opt.refit_constants != 0;
    if (flux->value.n != masks->grid.n()) throw ValidationError("flux does not match the mask grid");
    *out = new aor_reconstruction{reconstruct(masks->grid, masks->masks, psi->value, flux->value, a0, l, p,
                                              truth ? &truth->value : nullptr)};
  });
}

aor_status aor_reconstruction_coefficient(const aor_reconstruction* r, aor_field** out) {
  return guard([&] {
    require(r, "reconstruction");
    require(out, "out");
    *out = new aor_field{r->value.coefficient};
  });
}

aor_status aor_reconstruction_write_log(const aor_reconstruction* r, const char* path) {
  return guard([&] {
    require(r, "reconstruction");
    require(path, "path");
    write_reconstruction_log(path, r->value.state);
  });
}

size_t aor_reconstruction_iterations(const aor_reconstruction* r) { return r ? r->value.state.residual.size() : 0; }
double aor_reconstruction_residual(const aor_reconstruction* r) {
  return r && !r->value.state.residual.empty() ? r->value.state.residual.back() : 0.0;
}
double aor_reconstruction_monotone_fraction(const aor_reconstruction* r) {
  return r ? r->value.state.monotone_fraction() : 0.0;
}
double aor_reconstruction_theta(const aor_reconstruction* r) { return r ? r->value.theta : 0.0; }
double aor_reconstruction_tau(const aor_reconstruction* r) { return r ? r->value.state.tau : 0.0; }
const char* aor_reconstruction_diagnostic(const aor_reconstruction* r) {
  return r ? r->value.state.diagnostic.c_str() : "";
}

size_t aor_reconstruction_constants(const aor_reconstruction* r, double* out, size_t capacity) {
  if (!r) return 0;
  const auto& a = r->value.final_iterate.alpha;
  for (size_t i = 0; out && i < std::min(capacity, a.size()); ++i) out[i] = a[i];
  return a.size();
}

void aor_reconstruction_free(aor_reconstruction* r) { delete r; }

aor_status aor_l2_relative_error(const aor_field* a, const aor_field* b, double* out) {
  return guard([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    if (!(a->value.grid == b->value.grid)) throw ValidationError("fields live on different grids");
    ScalarField d = a->value;
    for (std::size_t k = 0; k < d.values.size(); ++k) d[k] -= b->value[k];
    const double nb = std::sqrt(inner(b->value, b->value));
    if (nb == 0.0) throw ValidationError("reference field is zero");
    *out = std::sqrt(inner(d, d)) / nb;
  });
}

}  // extern "C"

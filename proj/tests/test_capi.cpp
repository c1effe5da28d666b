#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "aorecon/aorecon.h"

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("aorecon_capi_" + name)).string();
}

}  // namespace

TEST_CASE("version and defaults") {
  CHECK(aor_schema_version() == AOR_SCHEMA_VERSION);
  CHECK(std::strlen(aor_version()) > 0);
  aor_acoustic_config c;
  aor_acoustic_config_default(&c);
  CHECK(c.mu == 1.0);
  CHECK(c.r0 == 0.1);
  aor_reconstruction_options o;
  aor_reconstruction_options_default(&o);
  CHECK(o.partition_step == 0.125);
  CHECK(o.max_iter == 200);
}

TEST_CASE("errors map to status codes with a thread-local message") {
  aor_phantom* p = nullptr;
  CHECK(aor_phantom_preset(nullptr, 1, &p) == AOR_ERR_INVALID_ARGUMENT);
  CHECK(std::string(aor_last_error()).find("name") != std::string::npos);
  CHECK(aor_phantom_preset("nonsense", 1, &p) == AOR_ERR_INVALID_ARGUMENT);
  CHECK(p == nullptr);
  // inclusion reaching outside D
  CHECK(aor_phantom_from_json("{\"a0\": 1.0, \"lower\": 0.5, \"upper\": 2.5, \"D_margin\": 0.15, \"inclusions\": "
                              "[{\"shape\": \"disk\", \"params\": [0.2, 0.2, 0.3], \"base\": 2.0}]}",
                              &p) == AOR_ERR_VALIDATION);
  CHECK(std::string(aor_last_error()).find("inside D") != std::string::npos);
  CHECK(aor_phantom_load("/nonexistent/phantom.json", &p) == AOR_ERR_IO);

  // another thread's failure does not leak into this thread's message
  REQUIRE(aor_phantom_preset("disk", 1, &p) == AOR_OK);
  CHECK(std::string(aor_last_error()).empty());
  std::thread([] {
    aor_phantom* q = nullptr;
    aor_phantom_preset("nonsense", 1, &q);
  }).join();
  CHECK(std::string(aor_last_error()).empty());

  aor_field* f = nullptr;
  CHECK(aor_phantom_sample(p, 9, &f) == AOR_ERR_VALIDATION);
  aor_phantom_free(p);
}

TEST_CASE("phantom JSON round trip and sampling") {
  aor_phantom* p = nullptr;
  REQUIRE(aor_phantom_preset("two-disk", 1, &p) == AOR_OK);
  CHECK(aor_phantom_count(p) == 2);
  char* text = nullptr;
  REQUIRE(aor_phantom_to_json(p, &text) == AOR_OK);
  aor_phantom* q = nullptr;
  REQUIRE(aor_phantom_from_json(text, &q) == AOR_OK);
  aor_string_free(text);
  aor_field *a = nullptr, *b = nullptr;
  REQUIRE(aor_phantom_sample(p, 33, &a) == AOR_OK);
  REQUIRE(aor_phantom_sample(q, 33, &b) == AOR_OK);
  CHECK(aor_field_n(a) == 33);
  CHECK(std::memcmp(aor_field_values(a), aor_field_values(b), 33 * 33 * sizeof(double)) == 0);
  double err = 1.0;
  REQUIRE(aor_l2_relative_error(a, b, &err) == AOR_OK);
  CHECK(err == 0.0);
  aor_field_free(a);
  aor_field_free(b);
  aor_phantom_free(p);
  aor_phantom_free(q);
}

TEST_CASE("forward on the empty phantom gives the background flux") {
  aor_phantom* p = nullptr;
  REQUIRE(aor_phantom_preset("empty", 1, &p) == AOR_OK);
  aor_field* phi = nullptr;
  aor_trace* flux = nullptr;
  REQUIRE(aor_forward(p, 33, 0.1, &phi, &flux) == AOR_OK);
  // background: constant coefficient, so the flux is symmetric under quarter turns of the square
  const size_t m = aor_trace_size(flux);
  REQUIRE(m == 4 * 32);
  const double* v = aor_trace_values(flux);
  for (size_t k = 0; k < m / 4; ++k)
    for (size_t s = 1; s < 4; ++s) CHECK(v[k + s * (m / 4)] == doctest::Approx(v[k]).epsilon(1e-10));
  // l dPhi/dnu = g - Phi with 0 < Phi < g = 1 on the boundary
  for (size_t k = 0; k < m; ++k) {
    CHECK(v[k] > 0.0);
    CHECK(v[k] < 1.0 / 0.1);
  }

  const std::string path = temp_path("flux.aorf");
  REQUIRE(aor_trace_write(flux, path.c_str()) == AOR_OK);
  aor_trace* back = nullptr;
  REQUIRE(aor_trace_read(path.c_str(), &back) == AOR_OK);
  CHECK(std::memcmp(aor_trace_values(back), v, m * sizeof(double)) == 0);
  aor_field* wrong = nullptr;
  CHECK(aor_field_read(path.c_str(), &wrong) == AOR_ERR_IO);
  std::filesystem::remove(path);
  aor_trace_free(back);
  aor_trace_free(flux);
  aor_field_free(phi);
  aor_phantom_free(p);
}

TEST_CASE("sinograms of the empty phantom vanish") {
  aor_phantom* p = nullptr;
  REQUIRE(aor_phantom_preset("empty", 1, &p) == AOR_OK);
  aor_acoustic_config c;
  aor_acoustic_config_default(&c);
  c.eta = 0.04;
  aor_sinogram* s = nullptr;
  REQUIRE(aor_measure(p, 65, &c, 8, 16, AOR_M_ETA, &s) == AOR_OK);
  CHECK(aor_sinogram_ny(s) == 8);
  CHECK(aor_sinogram_nr(s) == 16);
  for (int k = 0; k < 128; ++k) CHECK(aor_sinogram_values(s)[k] == 0.0);
  const std::string path = temp_path("sino.csv");
  REQUIRE(aor_sinogram_write_csv(s, path.c_str()) == AOR_OK);
  aor_sinogram* back = nullptr;
  REQUIRE(aor_sinogram_read_csv(path.c_str(), &c, &back) == AOR_OK);
  CHECK(aor_sinogram_nr(back) == 16);
  std::filesystem::remove(path);
  aor_sinogram_free(back);
  aor_sinogram_free(s);

  c.eta = 0.02;
  CHECK(aor_measure(p, 65, &c, 8, 16, AOR_M_ETA, &s) == AOR_ERR_VALIDATION);
  aor_phantom_free(p);
}

TEST_CASE("PGM export maps min and max to 0 and 255") {
  std::vector<double> v(17 * 17);
  for (size_t k = 0; k < v.size(); ++k) v[k] = -3.0 + 0.01 * static_cast<double>(k);
  aor_field* f = nullptr;
  REQUIRE(aor_field_create(17, v.data(), &f) == AOR_OK);
  const std::string path = temp_path("field.pgm");
  REQUIRE(aor_field_write_pgm(f, path.c_str()) == AOR_OK);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  in.get();
  std::vector<unsigned char> px(17 * 17);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  CHECK(magic == "P5");
  CHECK(w == 17);
  CHECK(maxv == 255);
  // top row first: the last grid row holds the maximum, the first grid row the minimum
  CHECK(px[16] == 255);
  CHECK(px[16 * 17] == 0);
  std::filesystem::remove(path);
  aor_field_free(f);
}

TEST_CASE("segment and reconstruct through the C interface") {
  aor_phantom* p = nullptr;
  REQUIRE(aor_phantom_preset("disk", 1, &p) == AOR_OK);
  aor_field* psi = nullptr;
  REQUIRE(aor_ground_truth_psi(p, 65, 0.1, &psi) == AOR_OK);
  aor_masks* masks = nullptr;
  REQUIRE(aor_segment(psi, 0.0, 9, 0.15, &masks) == AOR_OK);
  REQUIRE(aor_masks_count(masks) == 1);
  double hd = 1.0;
  REQUIRE(aor_masks_hausdorff(masks, p, &hd) == AOR_OK);
  CHECK(hd <= 2.0 / 64);

  aor_trace* flux = nullptr;
  REQUIRE(aor_forward(p, 65, 0.1, nullptr, &flux) == AOR_OK);
  aor_field* truth = nullptr;
  REQUIRE(aor_phantom_sample(p, 65, &truth) == AOR_OK);
  aor_reconstruction_options o;
  aor_reconstruction_options_default(&o);
  o.stop_tol = 1e-2;
  aor_reconstruction* r = nullptr;
  REQUIRE(aor_reconstruct(masks, psi, flux, 1.0, 0.1, &o, truth, &r) == AOR_OK);
  CHECK(aor_reconstruction_iterations(r) >= 2);
  CHECK(aor_reconstruction_theta(r) > 0.0);
  CHECK(aor_reconstruction_tau(r) > 0.0);
  double alpha = 0.0;
  CHECK(aor_reconstruction_constants(r, &alpha, 1) == 1);
  CHECK(std::abs(alpha - 2.0) < 0.125);
  aor_field* coef = nullptr;
  REQUIRE(aor_reconstruction_coefficient(r, &coef) == AOR_OK);
  double err = 1.0;
  REQUIRE(aor_l2_relative_error(coef, truth, &err) == AOR_OK);
  CHECK(err < 0.1);

  aor_field* small = nullptr;
  REQUIRE(aor_phantom_sample(p, 33, &small) == AOR_OK);
  aor_reconstruction* bad = nullptr;
  CHECK(aor_reconstruct(masks, small, flux, 1.0, 0.1, &o, nullptr, &bad) == AOR_ERR_INVALID_ARGUMENT);
  CHECK(bad == nullptr);

  aor_field_free(small);
  aor_field_free(coef);
  aor_reconstruction_free(r);
  aor_field_free(truth);
  aor_trace_free(flux);
  aor_masks_free(masks);
  aor_field_free(psi);
  aor_phantom_free(p);
}

#ifndef AORECON_H
#define AORECON_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define AOR_API __declspec(dllexport)
#else
#define AOR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define AOR_SCHEMA_VERSION 1

typedef enum aor_status {
  AOR_OK = 0,
  AOR_ERR_VALIDATION = 1,
  AOR_ERR_NUMERICAL = 2,
  AOR_ERR_IO = 3,
  AOR_ERR_INVALID_ARGUMENT = 4,
  AOR_ERR_INTERNAL = 5
} aor_status;

typedef struct aor_phantom aor_phantom;
typedef struct aor_field aor_field;
typedef struct aor_trace aor_trace;
typedef struct aor_sinogram aor_sinogram;
typedef struct aor_masks aor_masks;
typedef struct aor_reconstruction aor_reconstruction;

typedef struct aor_acoustic_config {
  double mu;
  double r0;
  double R;
  double eta;
} aor_acoustic_config;

typedef enum aor_measurement_kind { AOR_M_ETA = 0, AOR_M_TILDE = 1 } aor_measurement_kind;

typedef struct aor_reconstruction_options {
  double lower;
  double upper;
  double partition_step;
  double theta;  /* <= 0 selects the default from the optical bounds */
  double tau;    /* <= 0 selects 0.9 / L^2 */
  int max_iter;
  double stop_tol;
  int erosion;
  int refit_constants;
} aor_reconstruction_options;

/* Message of the last failed call on this thread; empty after success. */
AOR_API const char* aor_last_error(void);
AOR_API const char* aor_version(void);
AOR_API int aor_schema_version(void);

AOR_API void aor_acoustic_config_default(aor_acoustic_config* out);
AOR_API void aor_reconstruction_options_default(aor_reconstruction_options* out);
AOR_API void aor_string_free(char* s);

/* Phantoms */
AOR_API aor_status aor_phantom_preset(const char* name, uint64_t seed, aor_phantom** out);
AOR_API aor_status aor_phantom_load(const char* path, aor_phantom** out);
AOR_API aor_status aor_phantom_from_json(const char* text, aor_phantom** out);
AOR_API aor_status aor_phantom_to_json(const aor_phantom* p, char** out);
AOR_API aor_status aor_phantom_save(const aor_phantom* p, const char* path);
AOR_API size_t aor_phantom_count(const aor_phantom* p);
AOR_API aor_status aor_phantom_sample(const aor_phantom* p, int n, aor_field** out);
AOR_API void aor_phantom_free(aor_phantom* p);

/* Scalar fields on the n x n grid, node (i, j) at index j * n + i */
AOR_API aor_status aor_field_create(int n, const double* values, aor_field** out);
AOR_API aor_status aor_field_read(const char* path, aor_field** out);
AOR_API aor_status aor_field_write(const aor_field* f, const char* path);
AOR_API aor_status aor_field_write_pgm(const aor_field* f, const char* path);
AOR_API int aor_field_n(const aor_field* f);
AOR_API const double* aor_field_values(const aor_field* f);
AOR_API void aor_field_free(aor_field* f);

/* Boundary traces, 4 (n - 1) values counterclockwise from (0, 0) */
AOR_API aor_status aor_trace_read(const char* path, aor_trace** out);
AOR_API aor_status aor_trace_write(const aor_trace* t, const char* path);
AOR_API size_t aor_trace_size(const aor_trace* t);
AOR_API const double* aor_trace_values(const aor_trace* t);
AOR_API void aor_trace_free(aor_trace* t);

/* Optical forward model with illumination g = 1 and extrapolation length l */
AOR_API aor_status aor_forward(const aor_phantom* p, int n, double l, aor_field** phi, aor_trace** flux);

/* Sinograms */
AOR_API aor_status aor_measure(const aor_phantom* p, int n, const aor_acoustic_config* c, int ny, int nr,
                               aor_measurement_kind kind, aor_sinogram** out);
AOR_API aor_status aor_ideal_measurements(const aor_phantom* p, int n, const aor_acoustic_config* c, int ny, int nr,
                                          aor_sinogram** out);
AOR_API aor_status aor_sinogram_read_csv(const char* path, const aor_acoustic_config* c, aor_sinogram** out);
AOR_API aor_status aor_sinogram_write_csv(const aor_sinogram* s, const char* path);
AOR_API int aor_sinogram_ny(const aor_sinogram* s);
AOR_API int aor_sinogram_nr(const aor_sinogram* s);
AOR_API const double* aor_sinogram_values(const aor_sinogram* s);
AOR_API void aor_sinogram_free(aor_sinogram* s);

/* psi */
AOR_API aor_status aor_recover_psi(const aor_sinogram* m, int n, double eps, aor_field** out);
AOR_API aor_status aor_ground_truth_psi(const aor_phantom* p, int n, double l, aor_field** out);

/* Segmentation; threshold <= 0 selects Otsu */
AOR_API aor_status aor_segment(const aor_field* psi, double threshold, int min_area, double d_margin, aor_masks** out);
AOR_API aor_status aor_masks_from_phantom(const aor_phantom* p, int n, aor_masks** out);
AOR_API aor_status aor_masks_read_pgm(const char* const* paths, size_t count, int n, aor_masks** out);
AOR_API aor_status aor_masks_write_pgm(const aor_masks* m, size_t index, const char* path);
AOR_API size_t aor_masks_count(const aor_masks* m);
AOR_API int aor_masks_n(const aor_masks* m);
AOR_API aor_status aor_masks_area(const aor_masks* m, size_t index, size_t* nodes);
/* Largest over masks of the Hausdorff distance between mask boundary nodes and the phantom rims,
   masks matched to inclusions by nearest centroid; fails when the counts differ. */
AOR_API aor_status aor_masks_hausdorff(const aor_masks* m, const aor_phantom* p, double* out);
AOR_API void aor_masks_free(aor_masks* m);

/* Reconstruction from a psi field and a boundary flux; truth may be NULL */
AOR_API aor_status aor_reconstruct(const aor_masks* masks, const aor_field* psi, const aor_trace* flux, double a0,
                                   double l, const aor_reconstruction_options* o, const aor_field* truth,
                                   aor_reconstruction** out);
AOR_API aor_status aor_reconstruction_coefficient(const aor_reconstruction* r, aor_field** out);
AOR_API aor_status aor_reconstruction_write_log(const aor_reconstruction* r, const char* path);
AOR_API size_t aor_reconstruction_iterations(const aor_reconstruction* r);
AOR_API double aor_reconstruction_residual(const aor_reconstruction* r);
AOR_API double aor_reconstruction_monotone_fraction(const aor_reconstruction* r);
AOR_API double aor_reconstruction_theta(const aor_reconstruction* r);
AOR_API double aor_reconstruction_tau(const aor_reconstruction* r);
AOR_API const char* aor_reconstruction_diagnostic(const aor_reconstruction* r);
AOR_API size_t aor_reconstruction_constants(const aor_reconstruction* r, double* out, size_t capacity);
AOR_API void aor_reconstruction_free(aor_reconstruction* r);

/* Relative L2 (trapezoid) difference ||a - b|| / ||b|| */
AOR_API aor_status aor_l2_relative_error(const aor_field* a, const aor_field* b, double* out);

#ifdef __cplusplus
}
#endif

#endif

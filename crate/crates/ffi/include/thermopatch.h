#ifndef THERMOPATCH_H
#define THERMOPATCH_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TpStatus {
  TP_STATUS_OK = 0,
  TP_STATUS_NULL_ARGUMENT = 1,
  TP_STATUS_INVALID_ARGUMENT = 2,
  TP_STATUS_PARSE = 3,
  TP_STATUS_INFEASIBLE = 4,
  TP_STATUS_PATCH = 5,
  TP_STATUS_ORACLE = 6,
  TP_STATUS_BUFFER_TOO_SMALL = 7,
  TP_STATUS_PANIC = 99,
} TpStatus;

/**
 * Grayscale image with intensities in `[0, 1]`.
 */
typedef struct TpImage TpImage;

/**
 * Patch parameters.
 */
typedef struct TpTheta TpTheta;

/**
 * In-process toy detector.
 */
typedef struct TpToyOracle TpToyOracle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into this library from the same thread.
 */
const char *tp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tp_version(void);

/**
 * Parses a patch document and checks feasibility.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum TpStatus tp_theta_from_json(const char *json, struct TpTheta **out);

/**
 * Serializes `theta` into a newly allocated string; release it with
 * [`tp_string_free`].
 *
 * # Safety
 * `theta` must be a live handle; `out` must be writable.
 */
enum TpStatus tp_theta_to_json(const struct TpTheta *theta, char **out);

/**
 * # Safety
 * `theta` must be null or a handle not yet freed.
 */
void tp_theta_free(struct TpTheta *theta);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void tp_string_free(char *s);

/**
 * Copies `width * height` row-major intensities; values are clamped to
 * `[0, 1]`.
 *
 * # Safety
 * `pixels` must point at `width * height` doubles; `out` must be writable.
 */
enum TpStatus tp_image_new(size_t width, size_t height, const double *pixels, struct TpImage **out);

/**
 * Decodes a binary or ASCII PGM held in memory.
 *
 * # Safety
 * `data` must point at `len` readable bytes; `out` must be writable.
 */
enum TpStatus tp_image_from_pgm(const uint8_t *data, size_t len, struct TpImage **out);

/**
 * Width of `image`, 0 for null.
 *
 * # Safety
 * `image` must be null or a live handle.
 */
size_t tp_image_width(const struct TpImage *image);

/**
 * Height of `image`, 0 for null.
 *
 * # Safety
 * `image` must be null or a live handle.
 */
size_t tp_image_height(const struct TpImage *image);

/**
 * Copies the row-major intensities into `out`, which must hold at least
 * `width * height` doubles.
 *
 * # Safety
 * `image` must be a live handle; `out` must point at `len` writable doubles.
 */
enum TpStatus tp_image_pixels(const struct TpImage *image, double *out, size_t len);

/**
 * Encodes `image` as binary PGM into `out`. `written` receives the encoded
 * size even when the buffer is too small, so a null `out` with `len` 0
 * queries the size.
 *
 * # Safety
 * `image` must be a live handle; `out` must be null or point at `len`
 * writable bytes; `written` must be writable.
 */
enum TpStatus tp_image_to_pgm(const struct TpImage *image,
                              uint8_t *out,
                              size_t len,
                              size_t *written);

/**
 * # Safety
 * `image` must be null or a handle not yet freed.
 */
void tp_image_free(struct TpImage *image);

/**
 * The patch alone on a white `size x size` canvas.
 *
 * # Safety
 * `theta` must be a live handle; `out` must be writable.
 */
enum TpStatus tp_render_patch(const struct TpTheta *theta, size_t size, struct TpImage **out);

/**
 * Fuses the patch into `scene` on the target box `{x, y, w, h}`, centred
 * horizontally and at `anchor * h` below the box top.
 *
 * # Safety
 * `scene` and `theta` must be live handles; `bbox` must point at four
 * doubles; `out` must be writable.
 */
enum TpStatus tp_compose(const struct TpImage *scene,
                         const double *bbox,
                         const struct TpTheta *theta,
                         double anchor,
                         struct TpImage **out);

/**
 * Toy detector with the built-in template and default calibration.
 *
 * # Safety
 * `out` must be writable.
 */
enum TpStatus tp_toy_oracle_new(struct TpToyOracle **out);

/**
 * # Safety
 * `oracle` must be null or a handle not yet freed.
 */
void tp_toy_oracle_free(struct TpToyOracle *oracle);

/**
 * Scores `n_boxes` boxes given as consecutive `{x, y, w, h}` quadruples,
 * writing one objectness in `[0, 1]` per box.
 *
 * # Safety
 * Handles must be live; `boxes` must hold `4 * n_boxes` doubles and
 * `scores` `n_boxes` writable doubles.
 */
enum TpStatus tp_toy_score(const struct TpToyOracle *oracle,
                           const struct TpImage *image,
                           const double *boxes,
                           size_t n_boxes,
                           double *scores);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THERMOPATCH_H */

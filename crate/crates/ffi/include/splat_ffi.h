#ifndef SPLAT_FFI_H
#define SPLAT_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. */

#include <stddef.h>
#include <stdint.h>

#define SPLAT_OK 0

#define SPLAT_ERR_NULL 1

#define SPLAT_ERR_UTF8 2

#define SPLAT_ERR_IO 3

#define SPLAT_ERR_PARSE 4

#define SPLAT_ERR_INVALID 5

#define SPLAT_ERR_SHAPE 6

#define SPLAT_ERR_PANIC 7

/**
 * Pinhole camera.
 */
typedef struct SplatCamera SplatCamera;

/**
 * Row-major RGB image with `f64` channels in `[0, 1]`.
 */
typedef struct SplatImage SplatImage;

/**
 * Gaussian scene.
 */
typedef struct SplatScene SplatScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *splat_last_error_message(void);

int32_t splat_scene_load(const char *path, struct SplatScene **out);

/**
 * Number of Gaussians, or 0 for a null handle.
 */
size_t splat_scene_len(const struct SplatScene *scene);

void splat_scene_free(struct SplatScene *scene);

int32_t splat_camera_load(const char *path, struct SplatCamera **out);

/**
 * Camera at the origin looking down +z with the principal point centered.
 */
int32_t splat_camera_new_centered(size_t width,
                                  size_t height,
                                  double focal,
                                  struct SplatCamera **out);

void splat_camera_free(struct SplatCamera *camera);

/**
 * Renders with `samples` subsamples per pixel (1, 2, 4 or a perfect square).
 */
int32_t splat_render(const struct SplatScene *scene,
                     const struct SplatCamera *camera,
                     size_t samples,
                     struct SplatImage **out);

int32_t splat_image_read_ppm(const char *path, struct SplatImage **out);

int32_t splat_image_write_ppm(const struct SplatImage *image, const char *path);

size_t splat_image_width(const struct SplatImage *image);

size_t splat_image_height(const struct SplatImage *image);

/**
 * Pointer to `height * width * 3` values, owned by the image.
 */
const double *splat_image_data(const struct SplatImage *image);

void splat_image_free(struct SplatImage *image);

/**
 * PSNR in dB (99 for identical images).
 */
int32_t splat_psnr(const struct SplatImage *a, const struct SplatImage *b, double *out);

/**
 * Mean SSIM over channels.
 */
int32_t splat_ssim(const struct SplatImage *a, const struct SplatImage *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPLAT_FFI_H */

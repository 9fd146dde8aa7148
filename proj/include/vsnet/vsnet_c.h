/* C interface to the VS-Net library. Every entry point returns a status
 * code (or NULL for constructors); the failure message is retrievable per
 * thread via vsn_last_error(). Handles are opaque and single-owner. */
#ifndef VSNET_C_H
#define VSNET_C_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#ifndef VSN_API
#define VSN_API __attribute__((visibility("default")))
#endif

typedef enum vsn_status {
    VSN_OK = 0,
    VSN_EINVAL = 1,   /* bad argument, config, or input data */
    VSN_EIO = 2,      /* missing or unreadable file */
    VSN_ESTATE = 3,   /* call out of order (e.g. unbuilt model) */
    VSN_ERUNTIME = 4, /* numeric or other runtime failure */
    VSN_EUNKNOWN = 5
} vsn_status;

/* Message for the most recent failing call on this thread. The pointer
 * stays valid until the next failing call on the same thread. */
VSN_API const char* vsn_last_error(void);

VSN_API const char* vsn_version(void);

/* Frees strings handed out by this library (vsn_config_to_json). */
VSN_API void vsn_string_free(char* s);

/* ---- configuration ---------------------------------------------------
 * A config is one flat key/value document covering the model, optimizer,
 * synthesis, and evaluation settings; the JSON schema matches run.json. */

typedef struct vsn_config vsn_config;

VSN_API vsn_config* vsn_config_new(void);                   /* defaults */
VSN_API vsn_config* vsn_config_from_json(const char* text); /* NULL on error */

/* Sets one key. The value is parsed as JSON when possible ("0.01", "true",
 * "[8,16,32,64]"); path and name keys take the raw string. The full config
 * is revalidated, so a rejected value leaves the config unchanged. */
VSN_API vsn_status vsn_config_set(vsn_config* cfg, const char* key,
                                  const char* value);

VSN_API vsn_status vsn_config_to_json(const vsn_config* cfg, char** out);
VSN_API void vsn_config_free(vsn_config* cfg);

/* ---- dataset --------------------------------------------------------- */

/* Synthesizes the config's corpus (synth_* keys, synth_videos videos,
 * seeded by "seed", sized to the model input) into out_dir using the
 * documented frames/ + gt/ directory layout. */
VSN_API vsn_status vsn_synth_dataset(const vsn_config* cfg, const char* out_dir);

/* ---- training, evaluation, cross-validation --------------------------
 * data_dir and out_dir override the config fields when non-NULL. */

typedef void (*vsn_epoch_cb)(int epoch, double loss, double train_iou,
                             double holdout_iou, double seconds, void* user);

VSN_API vsn_status vsn_train(const vsn_config* cfg, const char* data_dir,
                             const char* out_dir, vsn_epoch_cb cb, void* user);

/* Loads the checkpoint into a model built from the config, scores every
 * frame, and (when out_dir is set) writes metrics.csv plus per-frame
 * saliency maps under out_dir/saliency/. Output pointers may be NULL. */
VSN_API vsn_status vsn_evaluate(const vsn_config* cfg, const char* checkpoint,
                                const char* data_dir, const char* out_dir,
                                double* accuracy, double* mean_iou,
                                double* mean_loss);

VSN_API vsn_status vsn_cross_validate(const vsn_config* cfg, int k,
                                      const char* data_dir, const char* out_dir,
                                      double* mean_accuracy,
                                      double* std_accuracy);

/* ---- models ----------------------------------------------------------- */

typedef struct vsn_model vsn_model;

VSN_API vsn_model* vsn_model_build(const vsn_config* cfg);
VSN_API vsn_model* vsn_model_load(const vsn_config* cfg, const char* checkpoint);
VSN_API vsn_status vsn_model_save(const vsn_model* model, const char* path);
VSN_API vsn_status vsn_model_param_count(const vsn_model* model,
                                         uint64_t* count);

/* Single-image forward (a static window): reads the image, which must
 * match the configured input size, and writes the saliency map as an
 * 8-bit grayscale PNG. Grayscale inputs are expanded to the configured
 * channel count. */
VSN_API vsn_status vsn_model_forward_image(const vsn_model* model,
                                           const char* image_path,
                                           const char* saliency_path);

VSN_API void vsn_model_free(vsn_model* model);

/* ---- benchmarking and refinement -------------------------------------- */

/* Mean single-threaded forward time at batch 1 over `repeats` runs on a
 * synthetic window, after two untimed warmup runs. checkpoint may be NULL
 * to benchmark an untrained model. */
VSN_API vsn_status vsn_benchmark(const vsn_config* cfg, const char* checkpoint,
                                 int repeats, double* fps, double* ms_per_step);

/* Label propagation over a grayscale saliency image; writes the refined
 * map as PNG. *no_seeds (may be NULL) is set to 1 when the map had no
 * seeds of either class and was returned unchanged. */
VSN_API vsn_status vsn_propagate_file(const char* in_path, const char* out_path,
                                      double fg_thresh, double bg_thresh,
                                      int iterations, int* no_seeds);

#ifdef __cplusplus
}
#endif

#endif /* VSNET_C_H */

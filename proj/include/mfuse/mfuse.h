/*
 * mfuse C API: multiscopic cost-volume fusion and disparity estimation.
 *
 * Every object is an opaque handle released with its matching *_free
 * function. Functions return an mf_status; on failure mf_last_error()
 * describes the problem for the calling thread.
 */
#ifndef MFUSE_H
#define MFUSE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MFUSE_BUILDING)
#    define MF_API __declspec(dllexport)
#  else
#    define MF_API __declspec(dllimport)
#  endif
#else
#  define MF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mf_status {
    MF_OK = 0,
    MF_ERR_INPUT = 1,       /* invalid arguments */
    MF_ERR_FORMAT = 2,      /* malformed file */
    MF_ERR_UNSUPPORTED = 3, /* valid but unsupported file variant */
    MF_ERR_SPEC = 4,        /* invalid scene description */
    MF_ERR_IO = 5,
    MF_ERR_NUMERIC = 6,     /* non-finite value during training/inference */
    MF_ERR_INTERNAL = 7
} mf_status;

typedef enum mf_matcher { MF_MATCHER_SAD = 0, MF_MATCHER_BT = 1 } mf_matcher;

typedef enum mf_fusion { MF_FUSION_MEAN = 0, MF_FUSION_MIN = 1, MF_FUSION_HEURISTIC = 2 } mf_fusion;

typedef enum mf_direction { MF_LEFT = 0, MF_RIGHT = 1, MF_TOP = 2, MF_BOTTOM = 3 } mf_direction;

typedef struct mf_image mf_image;         /* grayscale intensities */
typedef struct mf_disparity mf_disparity; /* disparity map, +inf = invalid */
typedef struct mf_scene mf_scene;         /* center + surrounding views */
typedef struct mf_volume mf_volume;       /* D x H x W cost volume */
typedef struct mf_network mf_network;     /* learned fusion network */
typedef struct mf_trainset mf_trainset;   /* training samples */

MF_API const char* mf_version(void);
MF_API const char* mf_last_error(void);
MF_API const char* mf_status_name(mf_status status);

/* Images ---------------------------------------------------------------- */

/* PGM directly, PPM converted with ITU-R 601 luma. */
MF_API mf_status mf_image_read(const char* path, mf_image** out);
MF_API mf_status mf_image_write_pgm(const mf_image* image, const char* path);
MF_API void mf_image_size(const mf_image* image, int* width, int* height);
MF_API void mf_image_free(mf_image* image);

/* Disparity maps --------------------------------------------------------- */

MF_API mf_status mf_disparity_read(const char* path, mf_disparity** out);
MF_API mf_status mf_disparity_write_pfm(const mf_disparity* map, const char* path);
/* Jet colormap PPM; values normalized by d_max, invalid pixels black. */
MF_API mf_status mf_disparity_write_jet(const mf_disparity* map, double d_max, const char* path);
MF_API void mf_disparity_size(const mf_disparity* map, int* width, int* height);
/* Row-major values; valid for the lifetime of the handle. */
MF_API const float* mf_disparity_data(const mf_disparity* map);
MF_API void mf_disparity_free(mf_disparity* map);

/* Scenes ------------------------------------------------------------------ */

/* center.pgm plus any of left/right/top/bottom.pgm present in the directory. */
MF_API mf_status mf_scene_load_dir(const char* dir, mf_scene** out);
/* Rectified horizontal triplet: first image LEFT, second CENTER, third RIGHT. */
MF_API mf_status mf_scene_from_triplet(const char* left, const char* center, const char* right, mf_scene** out);
/* Keeps only the listed directions, in order. */
MF_API mf_status mf_scene_select(const mf_scene* scene, const mf_direction* dirs, size_t count, mf_scene** out);
MF_API size_t mf_scene_view_count(const mf_scene* scene);
MF_API mf_direction mf_scene_view_direction(const mf_scene* scene, size_t index);
MF_API void mf_scene_size(const mf_scene* scene, int* width, int* height);
MF_API void mf_scene_free(mf_scene* scene);

typedef struct mf_synth_options {
    int width;
    int height;
    int d_max;
    int background_d_min;
    int background_d_max;
    int min_foreground;
    int max_foreground;
    double flat_patch_probability;
    double noise_sigma;
    double baseline_mm;
} mf_synth_options;

MF_API void mf_synth_options_default(mf_synth_options* opts);
/* Writes scene_0000.. under outdir plus manifest.txt. */
MF_API mf_status mf_synth_dataset(const mf_synth_options* opts, int count, uint64_t seed, const char* outdir);

/* Cost volumes ------------------------------------------------------------ */

typedef struct mf_block_params {
    int rho;
    int d_min;
    int d_max;
} mf_block_params;

MF_API void mf_block_params_default(mf_block_params* params);

/* Volume between the center and surrounding view `index`. */
MF_API mf_status mf_volume_compute(const mf_scene* scene, size_t index, mf_matcher matcher,
                                   const mf_block_params* params, mf_volume** out);
MF_API mf_status mf_volume_read(const char* path, mf_volume** out);
MF_API mf_status mf_volume_write(const mf_volume* volume, const char* path);
MF_API void mf_volume_shape(const mf_volume* volume, int* d_min, int* d_max, int* width, int* height);
MF_API mf_status mf_volume_fuse(const mf_volume* const* volumes, size_t count, mf_fusion strategy,
                                double outlier_factor, mf_volume** out);
MF_API mf_status mf_volume_wta(const mf_volume* volume, int subpixel, mf_disparity** out);
MF_API void mf_volume_free(mf_volume* volume);

/* Graph cuts -------------------------------------------------------------- */

typedef struct mf_gc_params {
    double k_occlusion;
    double lambda1;
    double lambda2;
    double theta;
    int d_cutoff;
    int upscale;
    int max_sweeps;
    uint64_t seed;
    int multiview_smoothness;
} mf_gc_params;

MF_API void mf_gc_params_default(mf_gc_params* params);
/* Heuristic-fused data term, alpha-expansion; occluded pixels are invalid. */
MF_API mf_status mf_graph_cuts(const mf_scene* scene, const mf_gc_params* params, mf_matcher matcher,
                               const mf_block_params* block, mf_disparity** out, double* final_energy);

/* Learned fusion ------------------------------------------------------------ */

MF_API mf_status mf_network_create(uint64_t seed, mf_network** out);
MF_API mf_status mf_network_load(const char* path, mf_network** out);
MF_API mf_status mf_network_save(const mf_network* net, const char* path);
MF_API size_t mf_network_param_count(const mf_network* net);
MF_API mf_status mf_network_infer(const mf_network* net, const mf_volume* const* volumes, size_t count,
                                  mf_disparity** out);
MF_API void mf_network_free(mf_network* net);

typedef struct mf_train_params {
    double learning_rate;
    int epochs;
    uint64_t seed;
    int crop;
    double final_lr_fraction;
    int standardize; /* nonzero: zero-mean unit-variance input volumes */
} mf_train_params;

MF_API void mf_train_params_default(mf_train_params* params);
MF_API mf_status mf_trainset_create(mf_trainset** out);
/* Copies the volumes; ground truth invalid pixels are excluded from the loss. */
MF_API mf_status mf_trainset_add(mf_trainset* set, const mf_volume* const* volumes, size_t count,
                                 const mf_disparity* gt);
MF_API size_t mf_trainset_size(const mf_trainset* set);
MF_API void mf_trainset_free(mf_trainset* set);

typedef void (*mf_epoch_callback)(int epoch, double mean_loss, void* user);

MF_API mf_status mf_train(const mf_trainset* set, const mf_train_params* params, mf_epoch_callback callback,
                          void* user, mf_network** out);

/* Evaluation ---------------------------------------------------------------- */

#define MF_MAX_THRESHOLDS 8

typedef struct mf_metrics {
    double rms;
    double avg_err;
    size_t threshold_count;
    double thresholds[MF_MAX_THRESHOLDS];
    double bad[MF_MAX_THRESHOLDS]; /* percent of pixels with error > threshold */
    size_t pixels;
    size_t invalid;
} mf_metrics;

/* thresholds may be NULL for the default {0.5, 1, 2}. mask_invalid != 0
 * excludes prediction-invalid pixels instead of counting them as failures. */
MF_API mf_status mf_evaluate(const mf_disparity* pred, const mf_disparity* gt, const double* thresholds,
                             size_t threshold_count, int mask_invalid, mf_metrics* out);

/* Per-scene rows plus an unweighted mean row as tab-separated text. The
 * returned string is released with mf_string_free. */
MF_API mf_status mf_evaluate_dataset(const char* const* names, const mf_disparity* const* preds,
                                     const mf_disparity* const* gts, size_t count, int mask_invalid,
                                     mf_metrics* mean, char** table);
MF_API void mf_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* MFUSE_H */

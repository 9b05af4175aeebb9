#ifndef CRG_CRG_H
#define CRG_CRG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CRG_API __declspec(dllexport)
#else
#define CRG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum crg_status {
    CRG_OK = 0,
    CRG_ERR_INVALID_ARGUMENT = 1,
    CRG_ERR_CONFIG = 2,
    CRG_ERR_SHAPE = 3,
    CRG_ERR_IO = 4,
    CRG_ERR_VERSION = 5,
    CRG_ERR_DIGEST = 6,
    CRG_ERR_TRUNCATED = 7,
    CRG_ERR_KIND = 8,
    CRG_ERR_DEGENERATE = 9,
    CRG_ERR_ORIENTATION = 10,
    CRG_ERR_NUMERIC = 11,
    CRG_ERR_NOT_FOUND = 12,
    CRG_ERR_INTERNAL = 13
} crg_status;

typedef struct crg_image crg_image;
typedef struct crg_dataset crg_dataset;
typedef struct crg_generator crg_generator;
typedef struct crg_encoder crg_encoder;

/* Receives one JSON document per training log record. */
typedef void (*crg_progress_fn)(const char* json_line, void* user);

/* Library */

CRG_API const char* crg_version(void);
CRG_API const char* crg_status_name(crg_status status);
/* Message of the last failed call on the calling thread; "" if none. */
CRG_API const char* crg_last_error(void);
CRG_API void crg_set_num_threads(int threads);
/* Releases strings and byte buffers returned through out-parameters. */
CRG_API void crg_free(void* ptr);

CRG_API crg_status crg_sha256_hex(const void* data, size_t size, char out[65]);
CRG_API crg_status crg_file_sha256_hex(const char* path, char out[65]);
CRG_API crg_status crg_base64_encode(const void* data, size_t size, char** out);
CRG_API crg_status crg_base64_decode(const char* text, uint8_t** out, size_t* size);

/* Images: single channel, row-major, values in [-1, 1]. */

CRG_API crg_status crg_image_create(int height, int width, const float* pixels, crg_image** out);
CRG_API crg_status crg_image_decode_png(const uint8_t* bytes, size_t size, crg_image** out);
CRG_API crg_status crg_image_read_png(const char* path, crg_image** out);
CRG_API crg_status crg_image_write_png(const crg_image* image, const char* path);
CRG_API crg_status crg_image_encode_png(const crg_image* image, uint8_t** bytes, size_t* size);
CRG_API int crg_image_height(const crg_image* image);
CRG_API int crg_image_width(const crg_image* image);
CRG_API const float* crg_image_pixels(const crg_image* image);
CRG_API void crg_image_free(crg_image* image);

/* kind is "dhash", "phash" or "whash"; out receives 16 hex digits. */
CRG_API crg_status crg_image_hash(const crg_image* image, const char* kind, char out[17]);
CRG_API crg_status crg_hash_similarity(const char* hex_a, const char* hex_b, double* out);
CRG_API crg_status crg_pixel_errors(const crg_image* a, const crg_image* b, double* mae, double* mse);

/* Datasets. spec_json: {"n", "seed", "resolution", "sampler"?}. */

CRG_API crg_status crg_dataset_plan(const char* spec_json, char** manifest_json);
CRG_API crg_status crg_dataset_generate(const char* dir, const char* spec_json, char** manifest_json);
CRG_API crg_status crg_dataset_load(const char* dir, int verify, crg_dataset** out);
CRG_API size_t crg_dataset_size(const crg_dataset* dataset);
CRG_API crg_status crg_dataset_manifest(const crg_dataset* dataset, char** manifest_json);
CRG_API crg_status crg_dataset_image(const crg_dataset* dataset, size_t index, crg_image** out);
/* labels[i] = 1 when sample i carries the attribute ("face_size",
 * "hair_shade", "mouth_curve", "eyewear"); labels has crg_dataset_size slots. */
CRG_API crg_status crg_dataset_labels(const crg_dataset* dataset, const char* attribute, int* labels);
CRG_API void crg_dataset_free(crg_dataset* dataset);

/* Generators. Loaded models are immutable and safe to share across threads. */

CRG_API crg_status crg_generator_load(const char* path, crg_generator** out);
CRG_API crg_status crg_generator_oracle(int latent_dim, int resolution, crg_generator** out);
CRG_API crg_status crg_generator_save(const crg_generator* generator, const char* path,
                                      const char* training_config_json);
/* {"kind", "architecture", "latent_dim", "resolution", "parameters", "digest"} */
CRG_API crg_status crg_generator_info(const crg_generator* generator, char** info_json);
CRG_API int crg_generator_latent_dim(const crg_generator* generator);
CRG_API int crg_generator_resolution(const crg_generator* generator);
CRG_API crg_status crg_generator_generate(const crg_generator* generator, const double* z, size_t dim,
                                          crg_image** out);
CRG_API void crg_generator_free(crg_generator* generator);

/* Encoders. */

CRG_API crg_status crg_encoder_load(const char* path, crg_encoder** out);
/* training_config_json: the "training_config" object stored in the checkpoint. */
CRG_API crg_status crg_encoder_training_config(const crg_encoder* encoder, char** config_json);
CRG_API crg_status crg_encoder_save(const crg_encoder* encoder, const char* path, const char* training_config_json);
CRG_API crg_status crg_encoder_info(const crg_encoder* encoder, char** info_json);
CRG_API int crg_encoder_latent_dim(const crg_encoder* encoder);
CRG_API int crg_encoder_resolution(const crg_encoder* encoder);
CRG_API crg_status crg_encoder_encode(const crg_encoder* encoder, const crg_image* image, double* z, size_t dim);
CRG_API void crg_encoder_free(crg_encoder* encoder);

/* Training. options_json keys: "log_path"; GAN also "snapshot_dir" and
 * "discriminator_path" (where to save the trained discriminator). */

CRG_API crg_status crg_train_gan(const crg_dataset* dataset, const char* config_json, const char* options_json,
                                 crg_progress_fn progress, void* user, crg_generator** generator_out,
                                 char** result_json);
/* generator_out may be NULL; in "tg" mode it receives the co-trained copy. */
CRG_API crg_status crg_train_encoder(const crg_generator* generator, const crg_dataset* dataset,
                                     const char* config_json, const char* options_json, crg_progress_fn progress,
                                     void* user, crg_encoder** encoder_out, crg_generator** generator_out,
                                     char** result_json);

/* Gradient-based inversion; with a non-NULL encoder the descent starts from
 * the encoder estimate. result: {"z", "loss", "best_step", "steps",
 * "loss_encoder"?}. */
CRG_API crg_status crg_invert(const crg_generator* generator, const crg_encoder* encoder, const crg_image* target,
                              const char* config_json, const char* trajectory_path, char** result_json);

/* Attribute directions travel as JSON documents {"raw", "unit", "attribute",
 * "provenance"}; projection statistics likewise. */

CRG_API crg_status crg_direction_from_latents(const double* z_neutral, const double* z_attributed, size_t dim,
                                              const char* attribute, char** direction_json);
CRG_API crg_status crg_direction_from_images(const crg_encoder* encoder, const crg_image* neutral,
                                             const crg_image* attributed, const char* attribute,
                                             char** direction_json);
/* directions_json: JSON array of direction documents. */
CRG_API crg_status crg_direction_average(const char* directions_json, char** direction_json);
CRG_API crg_status crg_edit_latent(const char* direction_json, const double* z, size_t dim, double k, int use_unit,
                                   double* out);
CRG_API crg_status crg_project(const char* direction_json, const double* z, size_t dim, double* out);
/* result: {"stats", "histogram_csv"}. histogram_path may be NULL. */
CRG_API crg_status crg_analyze(const crg_encoder* encoder, const crg_image* const* neutral, size_t neutral_count,
                               const crg_image* const* attributed, size_t attributed_count,
                               const char* direction_json, const char* histogram_path, int bins,
                               char** result_json);
CRG_API crg_status crg_k_range(const char* direction_json, const char* stats_json, const double* z, size_t dim,
                               int use_unit, double* k_lo, double* k_hi);

/* Evaluation rows: {"name", "dhash", "phash", "whash", "mae", "mse", "count"}. */

CRG_API crg_status crg_evaluate(const crg_encoder* encoder, const crg_generator* generator,
                                const crg_image* const* images, size_t count, const char* name, char** row_json);
CRG_API crg_status crg_evaluate_mean_baseline(const crg_image* const* images, size_t count, char** row_json);
/* report_json: {"dataset_digest", "rows": [...]} -> aligned text table. */
CRG_API crg_status crg_metrics_report_text(const char* report_json, char** text);

#ifdef __cplusplus
}
#endif

#endif

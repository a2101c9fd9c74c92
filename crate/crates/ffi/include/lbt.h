#ifndef LBT_H
#define LBT_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum LbtMode {
  // Center-distance association.
  LBT_MODE_SORT = 0,
  // IoU association.
  LBT_MODE_KIOU = 1,
} LbtMode;

// Result of every fallible call.
typedef enum LbtStatus {
  LBT_STATUS_OK = 0,
  // A required pointer was null.
  LBT_STATUS_NULL_POINTER = 1,
  // Bad parameter value or a non-finite or empty box.
  LBT_STATUS_INVALID_ARGUMENT = 2,
  // Frame index not after the last processed frame.
  LBT_STATUS_FRAME_ORDER = 3,
  // Detection step on a localization frame or the reverse.
  LBT_STATUS_WRONG_FRAME_KIND = 4,
  // No localization frame in progress.
  LBT_STATUS_NO_PENDING_FRAME = 5,
  // Candidate list count differs from the crop count.
  LBT_STATUS_RESULT_COUNT = 6,
  // Output buffer too small; the required length was still written.
  LBT_STATUS_BUFFER_TOO_SMALL = 7,
  // Index past the end of a list.
  LBT_STATUS_OUT_OF_RANGE = 8,
  // Unexpected failure, including a caught panic.
  LBT_STATUS_INTERNAL = 9,
} LbtStatus;

// Opaque tracker handle.
typedef struct LbtTracker LbtTracker;

// Construction parameters. Start from [`lbt_params_default`].
typedef struct LbtParams {
  enum LbtMode mode;
  uint32_t frame_width;
  uint32_t frame_height;
  // Localization frames between detection frames; 0 disables localization.
  uint64_t d;
  // Crop side as a multiple of the larger predicted box side.
  double beta;
  double resolution;
  uint32_t min_hits;
  uint32_t max_age;
  double min_iou;
  double min_confidence;
} LbtParams;

// Box in center form: `(x, y)` is the center.
typedef struct LbtBox {
  double x;
  double y;
  double w;
  double h;
} LbtBox;

typedef struct LbtDetection {
  // Frame coordinates.
  struct LbtBox bbox;
  double confidence;
} LbtDetection;

// Square crop centered at `(cx, cy)` with side `s`, in frame pixels.
typedef struct LbtCrop {
  double cx;
  double cy;
  double s;
} LbtCrop;

// One crop of the pending localization frame.
typedef struct LbtCropRequest {
  uint64_t track_id;
  struct LbtCrop crop;
  // Predicted box the crop was built from.
  struct LbtBox apriori;
  // Localizer input side in pixels.
  double resolution;
} LbtCropRequest;

typedef struct LbtCandidate {
  // Localizer coordinates: origin at the crop center, crop spans `resolution` pixels.
  struct LbtBox bbox;
  double confidence;
} LbtCandidate;

// Localizer output for one crop.
typedef struct LbtCandidateList {
  const struct LbtCandidate *items;
  size_t len;
  // Set when the localizer call failed; the crop counts as a miss.
  bool failed;
} LbtCandidateList;

// A live tracklet's current state estimate.
typedef struct LbtTrack {
  uint64_t track_id;
  struct LbtBox bbox;
  // Past the tentative stage, even if missed on the latest frame.
  bool confirmed;
  uint32_t misses;
} LbtTrack;

// One output box; results are ordered by track id, then frame.
typedef struct LbtRecord {
  uint64_t frame;
  uint64_t track_id;
  struct LbtBox bbox;
} LbtRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library defaults: kiou, d = 3, 1920x1080.
struct LbtParams lbt_params_default(void);

// Creates a tracker. `*out` is set only on success.
//
// # Safety
// `params` must be null or point to a valid `LbtParams`; `out` must be null
// or writable.
enum LbtStatus lbt_tracker_new(const struct LbtParams *params, struct LbtTracker **out);

// Destroys a tracker. Null is ignored.
//
// # Safety
// `t` must be null or a handle from `lbt_tracker_new` not yet freed.
void lbt_tracker_free(struct LbtTracker *t);

// # Safety
// `t` must be a live handle or null; `out` writable or null.
enum LbtStatus lbt_is_detection_frame(const struct LbtTracker *t, uint64_t frame, bool *out);

// Runs a detection frame. Non-finite or degenerate boxes are rejected.
//
// # Safety
// `dets` must point to `n` readable items (or be null with `n == 0`).
enum LbtStatus lbt_step_detection(struct LbtTracker *t,
                                  uint64_t frame,
                                  const struct LbtDetection *dets,
                                  size_t n);

// Predicts every live tracklet and builds one crop each. Read them with
// `lbt_crop_request`, then call `lbt_finish_localization`.
//
// # Safety
// `t` must be a live handle; `n_crops` writable.
enum LbtStatus lbt_begin_localization(struct LbtTracker *t, uint64_t frame, size_t *n_crops);

// Crop `index` of the pending localization frame, in track-id order.
//
// # Safety
// `t` must be a live handle; `out` writable.
enum LbtStatus lbt_crop_request(const struct LbtTracker *t,
                                size_t index,
                                struct LbtCropRequest *out);

// Applies one candidate list per crop. `n` must equal the crop count; on a
// count mismatch the frame stays pending and may be retried.
//
// # Safety
// `lists` must point to `n` readable lists whose `items` point to `len`
// readable candidates each.
enum LbtStatus lbt_finish_localization(struct LbtTracker *t,
                                       const struct LbtCandidateList *lists,
                                       size_t n);

// Live tracklets in id order. With `cap` too small, returns
// `BufferTooSmall` and still writes the count to `out_len`.
//
// # Safety
// `out` must have room for `cap` items (or be null with `cap == 0`).
enum LbtStatus lbt_live_tracks(const struct LbtTracker *t,
                               struct LbtTrack *out,
                               size_t cap,
                               size_t *out_len);

// Output boxes of every confirmed tracklet so far, sorted by track id then
// frame. Same buffer protocol as `lbt_live_tracks`.
//
// # Safety
// `out` must have room for `cap` items (or be null with `cap == 0`).
enum LbtStatus lbt_results(const struct LbtTracker *t,
                           struct LbtRecord *out,
                           size_t cap,
                           size_t *out_len);

// Message for the last failed call on this thread, or null if none. Valid
// until the next failing call on the same thread.
const char *lbt_last_error_message(void);

void lbt_clear_error(void);

double lbt_iou(struct LbtBox a, struct LbtBox b);

// Square crop of side `beta * max(w, h)` around `b`, before clipping.
struct LbtCrop lbt_make_crop(struct LbtBox b, double beta);

// Moves `crop` inside a `width` x `height` frame with the smallest
// translation, shrinking it first if it exceeds the smaller frame side.
struct LbtCrop lbt_clip_crop(struct LbtCrop crop, uint32_t width, uint32_t height);

struct LbtBox lbt_local_to_global(struct LbtBox b, struct LbtCrop crop, double resolution);

struct LbtBox lbt_global_to_local(struct LbtBox b, struct LbtCrop crop, double resolution);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LBT_H */

#ifndef MSP_H
#define MSP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum MspStatus {
  // The call succeeded.
  MSP_OK = 0,
  // A required pointer argument was null.
  MSP_ERR_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  MSP_ERR_UTF8 = 2,
  // The input text could not be parsed.
  MSP_ERR_PARSE = 3,
  // The instance failed structural validation.
  MSP_ERR_INVALID_INSTANCE = 4,
  // A panic was caught at the boundary; state may be stale.
  MSP_ERR_PANIC = 5,
} MspStatus;

// An instance held by the library: a graph and how it came to exist.
typedef struct MspInstance MspInstance;

// Counters of one solver run.
typedef struct MspSolveStats {
  uint32_t passes;
  uint64_t prune_events;
  uint64_t initial_support;
  uint64_t kernel_size;
  uint64_t wall_millis;
} MspSolveStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. The pointer
// stays valid until the next failing call on the same thread. Never null.
const char *msp_last_error_message(void);

// Parses an instance document. On success `*out` owns a new handle.
//
// # Safety
// `json` must be nul-terminated; `out` must be a valid pointer.
enum MspStatus msp_instance_load_json(const char *json, struct MspInstance **out);

// Parses DIMACS CNF text and reduces it to an instance. `use_gadgets`
// selects the degree-bounded reduction; otherwise one stage per clause.
//
// # Safety
// `dimacs` must be nul-terminated; `out` must be a valid pointer.
enum MspStatus msp_instance_from_dimacs(const char *dimacs,
                                        bool use_gadgets,
                                        struct MspInstance **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `h` must be a pointer returned by this library, released at most once.
void msp_instance_free(struct MspInstance *h);

// Serializes the instance document. Returns null on failure; release the
// string with [`msp_string_free`].
//
// # Safety
// `h` must be a live handle or null.
char *msp_instance_to_json(const struct MspInstance *h);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be a string returned by this library, released at most once.
void msp_string_free(char *s);

// Number of stages `L`; 0 for a null handle.
//
// # Safety
// `h` must be a live handle or null.
uint64_t msp_instance_stages(const struct MspInstance *h);

// Number of edges; 0 for a null handle.
//
// # Safety
// `h` must be a live handle or null.
uint64_t msp_instance_edge_count(const struct MspInstance *h);

// Number of vertices; 0 for a null handle.
//
// # Safety
// `h` must be a live handle or null.
uint64_t msp_instance_vertex_count(const struct MspInstance *h);

// Checks the structural shape, and with `hygiene` also the label
// properties after preprocessing. Violations are reported through
// [`msp_last_error_message`], one per line.
//
// # Safety
// `h` must be a live handle or null.
enum MspStatus msp_validate(const struct MspInstance *h, bool hygiene);

// Runs the decision kernel. `*decision_out` becomes 1 for yes, 0 for no.
// `stats_out` may be null. In strict mode structural violations reject
// the instance instead of solving it.
//
// # Safety
// `h` must be a live handle or null; `decision_out` must be a valid
// pointer; `stats_out` must be a valid pointer or null.
enum MspStatus msp_solve(const struct MspInstance *h,
                         bool strict,
                         int *decision_out,
                         struct MspSolveStats *stats_out);

// Runs the exhaustive path search under a budget. `*decision_out`
// becomes 1 for yes, 0 for no, and -1 when the budget ran out.
//
// # Safety
// `h` must be a live handle or null; `decision_out` must be a valid
// pointer.
enum MspStatus msp_oracle(const struct MspInstance *h,
                          uint64_t max_nodes,
                          uint64_t max_millis,
                          int *decision_out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MSP_H */

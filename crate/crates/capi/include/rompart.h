/* C interface to the partitioned FOM/ROM coupling solver.
 *
 * Configs and results are opaque handles; construct them here, query them
 * here, release them here. Calls that can fail return a rompart_status and
 * leave a thread-local message readable through rompart_last_error_message.
 *
 * Kept in sync with src/lib.rs by the header_matches_exports test.
 */

#ifndef ROMPART_H
#define ROMPART_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rompart_status {
  ROMPART_OK = 0,
  ROMPART_NULL_ARGUMENT = 1,
  ROMPART_INVALID_ARGUMENT = 2,
  ROMPART_CONFIG_ERROR = 3,
  ROMPART_NUMERIC_ERROR = 4,
  ROMPART_UNSTABLE = 5,
  ROMPART_IO_ERROR = 6,
  ROMPART_INTERNAL = 7,
} rompart_status;

typedef struct rompart_config rompart_config;
typedef struct rompart_result rompart_result;

/* Library version as a static string. */
const char *rompart_version(void);

/* Message for the most recent failure on this thread. Valid until the next
 * failing call on the same thread. */
const char *rompart_last_error_message(void);

/* Built-in configurations. Release with rompart_config_free. */
rompart_config *rompart_config_desk(void);
rompart_config *rompart_config_paper(void);

/* Parses a TOML configuration; returns NULL on failure with the message set.
 * Release with rompart_config_free. */
rompart_config *rompart_config_from_toml(const char *text);

void rompart_config_free(rompart_config *cfg);

/* Integrates one coupled formulation against the benchmark described by the
 * config and hands back an opaque result. `formulation` is one of "FF-fLM",
 * "RR-rLM", "RR-fLM", "FR-fLM", "FR-rLM"; `d0` is the interior basis size
 * per subdomain, zero meaning the config's energy criterion. Release with
 * rompart_result_free. */
rompart_status rompart_run(const rompart_config *cfg, const char *formulation,
                           size_t d0, rompart_result **out);

/* Result queries. Array pointers are borrowed and valid until the result is
 * released. */
size_t rompart_result_len(const rompart_result *res);
const double *rompart_result_times(const rompart_result *res);
const double *rompart_result_errors(const rompart_result *res);
double rompart_result_max_error(const rompart_result *res);
double rompart_result_cond(const rompart_result *res);
int rompart_result_spd(const rompart_result *res);
double rompart_result_max_residual(const rompart_result *res);
size_t rompart_result_multiplier_dim(const rompart_result *res);

void rompart_result_free(rompart_result *res);

/* Runs the numerical self checks; returns the number of failed checks, zero
 * when everything passed, or -1 on an internal panic. */
int rompart_verify(uint64_t seed, size_t trials);

#ifdef __cplusplus
}
#endif

#endif /* ROMPART_H */

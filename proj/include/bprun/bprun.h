#ifndef BPRUN_BPRUN_H
#define BPRUN_BPRUN_H

/* C interface to the bprun engine.
 *
 * Conventions:
 *   - every call returns a bpr_status; BPR_OK is 0;
 *   - on failure bpr_last_error() describes the most recent error on the
 *     calling thread (valid until the next bprun call on that thread);
 *   - strings returned through char** out-parameters are heap-allocated and
 *     must be released with bpr_string_free;
 *   - documents crossing the boundary are UTF-8 JSON text;
 *   - handles are opaque and not shareable across threads unless noted.
 */

#include <stdint.h>

#if defined(_WIN32)
#define BPR_API __declspec(dllexport)
#else
#define BPR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bpr_status {
    BPR_OK = 0,
    BPR_ERR_INVALID = 1,      /* bad argument, schema or config */
    BPR_ERR_NOT_FOUND = 2,    /* unknown agent, session, execution, task */
    BPR_ERR_UNAUTHORIZED = 3, /* token does not match the agent */
    BPR_ERR_DENIED = 4,       /* user is on the agent's deny list */
    BPR_ERR_CONFLICT = 5,     /* session busy or closed */
    BPR_ERR_TRANSIENT = 6,    /* unreachable peer, timeout */
    BPR_ERR_PROTOCOL = 7,
    BPR_ERR_QUOTA = 8,
    BPR_ERR_FATAL = 9         /* I/O failure, internal error */
} bpr_status;

BPR_API const char* bpr_version(void);
BPR_API const char* bpr_last_error(void);
BPR_API const char* bpr_status_name(bpr_status status);
BPR_API void bpr_string_free(char* s);

/* Called once per stream event. Return non-zero to stop listening (the
 * execution itself carries on). */
typedef int (*bpr_event_fn)(const char* type, const char* data_json, void* user);

/* ---- daemon: sessions, executions and the HTTP gateway, in process ---- */

typedef struct bpr_daemon bpr_daemon;

/* `config_path` is an agentd.toml key/value file. */
BPR_API bpr_status bpr_daemon_open(const char* config_path, bpr_daemon** out);
/* Same, from text; relative paths resolve against `base_dir` (may be NULL). */
BPR_API bpr_status bpr_daemon_open_text(const char* config_text, const char* base_dir, bpr_daemon** out);
/* Stops the HTTP server if running and shuts the control layer down. */
BPR_API void bpr_daemon_close(bpr_daemon* d);

/* Starts serving HTTP on a background thread. `host`/`port` override the
 * config when non-NULL / >= 0; port 0 picks a free port, reported in
 * *bound_port (may be NULL). */
BPR_API bpr_status bpr_daemon_listen(bpr_daemon* d, const char* host, int port, int* bound_port);
BPR_API bpr_status bpr_daemon_stop(bpr_daemon* d);

/* Registers an agent from its JSON config file; *agent_id may be NULL. */
BPR_API bpr_status bpr_daemon_register(bpr_daemon* d, const char* agent_config_path, char** agent_id);

/* Session summary document. */
BPR_API bpr_status bpr_session_create(bpr_daemon* d, const char* user_id, const char* agent_id, const char* token,
                                      char** session_json);
/* Posts a message and blocks until the stream ends (awaiting_user, finished
 * or failed), delivering each event to `fn` (may be NULL). */
BPR_API bpr_status bpr_session_post(bpr_daemon* d, const char* session_id, const char* token, const char* content,
                                    bpr_event_fn fn, void* user);
/* up_to_turn < 0 means the whole history. Output: JSON array of entries. */
BPR_API bpr_status bpr_session_history(bpr_daemon* d, const char* session_id, const char* token, int up_to_turn,
                                       char** entries_json);
BPR_API bpr_status bpr_execution_telemetry(bpr_daemon* d, const char* exec_id, const char* token, char** record_json);
BPR_API bpr_status bpr_daemon_status(bpr_daemon* d, char** status_json);

/* ---- client for a running agentd ---- */

typedef struct bpr_client bpr_client;

BPR_API bpr_status bpr_client_open(const char* base_url, bpr_client** out);
BPR_API void bpr_client_close(bpr_client* c);
BPR_API bpr_status bpr_client_create_session(bpr_client* c, const char* user_id, const char* agent_id,
                                             const char* token, char** session_json);
/* `raw_stream` (may be NULL) receives the exact bytes of the event stream. */
BPR_API bpr_status bpr_client_post(bpr_client* c, const char* session_id, const char* token, const char* content,
                                   bpr_event_fn fn, void* user, char** raw_stream);
BPR_API bpr_status bpr_client_history(bpr_client* c, const char* session_id, const char* token, int up_to_turn,
                                      char** history_json);
BPR_API bpr_status bpr_client_telemetry(bpr_client* c, const char* exec_id, const char* token, char** record_json);
BPR_API bpr_status bpr_client_status(bpr_client* c, char** status_json);

/* ---- agent configs ---- */

/* Loads and fully registers the config in a scratch registry (knowledge
 * bases ingested, runtime checked, entry file resolved) without running it.
 * Output: {"agent_id","runtime","blueprint_dir","entry_file","tools":[...]} */
BPR_API bpr_status bpr_agent_validate(const char* agent_config_path, const char* blueprint_root, char** summary_json);

/* Appends `agent_config_path` to the registry file {"agents":[...]},
 * creating it when missing. Fails with BPR_ERR_CONFLICT when the agent id
 * is already listed. */
BPR_API bpr_status bpr_registry_add(const char* registry_path, const char* agent_config_path,
                                    const char* blueprint_root);

/* ---- benchmark harness ---- */

typedef struct bpr_bench bpr_bench;

/* options: {"fixture_root","blueprint_root","work_dir","deterministic":bool,
 *           "max_steps":int, "domains":[...]} */
BPR_API bpr_status bpr_bench_open(const char* options_json, bpr_bench** out);
BPR_API void bpr_bench_close(bpr_bench* b);

/* request: {"domain":"all|retail|airline","variant":"blueprint|fc|react|act",
 *           "toggles":{...},"trials":N,"concurrency":M,"baseline":bool,"out":DIR}
 * Writes the report under "out" (when given). Output:
 *   {"label","passed","total","failures":[{task_id,trial,diagnostic}],
 *    "trial_consistency":{...},"report_text","out"} */
BPR_API bpr_status bpr_bench_run(bpr_bench* b, const char* request_json, char** summary_json);

/* request: {"domain","grid":"sca,dc,rt","trials","concurrency","out"} */
BPR_API bpr_status bpr_bench_ablate(bpr_bench* b, const char* request_json, char** summary_json);

/* Replays the tool calls of a telemetry record (JSON text) on a fresh copy
 * of its domain's initial state. `task_id` (may be NULL) adds a comparison
 * with that task's expected hash. Output:
 *   {"exec_id","agent_id","domain","events":N,"tool_calls":[...],
 *    "state_hash", "task_id"?, "expected_state_hash"?, "matches"?} */
BPR_API bpr_status bpr_bench_replay(bpr_bench* b, const char* record_json, const char* task_id, char** result_json);

/* Looks an execution up in a telemetry log file. */
BPR_API bpr_status bpr_telemetry_find(const char* log_path, const char* exec_id, char** record_json);

#ifdef __cplusplus
}
#endif

#endif

#ifndef SSRTB_H
#define SSRTB_H

/* C interface to the bidding lab. All functions return a status code;
 * ssrtb_last_error() describes the most recent failure on this thread. */

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ssrtb_status {
    SSRTB_OK = 0,
    SSRTB_ERR_INVALID_ARG = 1,
    SSRTB_ERR_CONFIG = 2,
    SSRTB_ERR_CONTRACT = 3,
    SSRTB_ERR_IO = 4,
    SSRTB_ERR_CHECKPOINT = 5,
    SSRTB_ERR_INTERNAL = 6
} ssrtb_status;

typedef struct ssrtb_lab ssrtb_lab;

const char* ssrtb_version(void);

/* Message for the last failing call on the current thread; never NULL. */
const char* ssrtb_last_error(void);

ssrtb_status ssrtb_lab_create(const char* config_path, ssrtb_lab** out);
ssrtb_status ssrtb_lab_create_from_json(const char* json_text, ssrtb_lab** out);
void ssrtb_lab_destroy(ssrtb_lab* lab);

/* Writes the seeded train day and test days as JSONL into out_dir. */
ssrtb_status ssrtb_simulate(ssrtb_lab* lab, const char* out_dir);

/* algo: "rmdp", "amdp" or "m-rmdp". Writes checkpoints, metadata and
 * convergence CSVs. *converged (optional) is 1 when every trained network
 * improved both its loss and its episode-return series. */
ssrtb_status ssrtb_train(ssrtb_lab* lab, const char* algo, const char* out_dir,
                         int* converged);

/* Evaluates one saved checkpoint against the keyword-preset baseline on the
 * test days at equal cost. *cost_ok (optional) is 1 when every run stayed
 * within the equal-cost tolerance. */
ssrtb_status ssrtb_eval(ssrtb_lab* lab, const char* checkpoint_path,
                        const char* out_dir, int* cost_ok);

/* Full protocol: trains every algorithm and writes comparison.csv. */
ssrtb_status ssrtb_compare(ssrtb_lab* lab, const char* out_dir, int* cost_ok);

/* Cross-day hourly consistency probe. Optional outputs: the fraction of
 * cells inside the 3% band, the largest observed deviation, and whether the
 * implied pairwise state ratio stayed below 1% wherever the band held. */
ssrtb_status ssrtb_consistency(ssrtb_lab* lab, const char* out_dir,
                               double* pass_fraction, double* max_eta,
                               int* chain_ok);

#ifdef __cplusplus
}
#endif

#endif /* SSRTB_H */

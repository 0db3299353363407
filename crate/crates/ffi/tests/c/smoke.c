/* Exercises the C header end to end: load, predict, evaluate, AUC. */
#include <math.h>
#include <stdio.h>
#include <string.h>

#include "deepcnf.h"

#define CHECK(cond)                                                     \
  do {                                                                  \
    if (!(cond)) {                                                      \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond,    \
              dcnf_last_error_message());                               \
      return 1;                                                         \
    }                                                                   \
  } while (0)

int main(int argc, char **argv) {
  if (argc != 3) {
    fprintf(stderr, "usage: smoke MODEL DATA\n");
    return 2;
  }
  DcnfModel *model = NULL;
  DcnfDataset *data = NULL;
  CHECK(dcnf_model_load(argv[1], &model) == DCNF_STATUS_OK);
  CHECK(dcnf_dataset_load(argv[2], &data) == DCNF_STATUS_OK);

  size_t labels = dcnf_model_num_labels(model);
  size_t dim = dcnf_model_feature_dim(model);
  CHECK(labels >= 2 && dim >= 1);

  double x[4 * 8];
  for (size_t i = 0; i < 4 * dim; i++) x[i] = 0.1 * (double)i;
  double p[4 * 8];
  CHECK(dcnf_model_predict_marginals(model, x, 4, dim, p, 4 * labels) == DCNF_STATUS_OK);
  for (size_t i = 0; i < 4; i++) {
    double s = 0.0;
    for (size_t t = 0; t < labels; t++) s += p[i * labels + t];
    CHECK(fabs(s - 1.0) < 1e-9);
  }
  CHECK(dcnf_model_predict_marginals(model, x, 4, dim, p, 1) == DCNF_STATUS_BUFFER_TOO_SMALL);

  char *json = NULL;
  CHECK(dcnf_model_evaluate_json(model, data, &json) == DCNF_STATUS_OK);
  CHECK(strstr(json, "\"mean_auc\"") != NULL);
  dcnf_string_free(json);

  double scores[4] = {0.1, 0.4, 0.35, 0.8};
  uint8_t pos[4] = {0, 0, 1, 1};
  double auc = 0.0;
  CHECK(dcnf_empirical_auc(scores, pos, 4, &auc) == DCNF_STATUS_OK);
  CHECK(fabs(auc - 0.75) < 1e-12);

  DcnfModel *missing = NULL;
  CHECK(dcnf_model_load("/nonexistent/model.json", &missing) == DCNF_STATUS_IO);
  CHECK(missing == NULL && strlen(dcnf_last_error_message()) > 0);

  dcnf_dataset_free(data);
  dcnf_model_free(model);
  printf("ok %s\n", dcnf_version());
  return 0;
}

#include <stdio.h>
#include "coherence_mi.h"

int main(void) {
    double x[400], y[400];
    unsigned s = 12345u;
    for (int i = 0; i < 400; i++) {
        s = s * 1103515245u + 12345u;
        x[i] = (double)(s >> 8) / 16777216.0 - 0.5;
        y[i] = x[i] + 0.1 * ((double)((s >> 4) & 255u) / 256.0 - 0.5);
    }
    CmiRealSamples *samples = NULL;
    CmiFeatureConfig *cfg = NULL;
    if (cmi_real_samples_new(x, y, 400, &samples) != CMI_STATUS_OK) return 1;
    if (cmi_config_from_sigma2(0.1, &cfg) != CMI_STATUS_OK) return 2;
    double value = -1.0;
    uint32_t warnings = 0;
    if (cmi_smi_analog(samples, cfg, &value, &warnings) != CMI_STATUS_OK) return 3;
    if (!(value > 0.0)) return 4;
    if (cmi_config_new(0.1, 0.3, 4, &cfg) != CMI_STATUS_INVALID_PARAMETER) return 5;
    if (cmi_last_error_message() == NULL) return 6;
    printf("%.6f\n", value);
    cmi_config_free(cfg);
    cmi_real_samples_free(samples);
    return 0;
}

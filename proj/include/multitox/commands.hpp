#ifndef MULTITOX_COMMANDS_HPP
#define MULTITOX_COMMANDS_HPP

#include "multitox/config.hpp"

namespace multitox {

// Command implementations behind the CLI and the C API.  Each reads its
// inputs from the config, writes its outputs under out_dir, and throws
// ConfigError for usage problems (exit code 2) or other exceptions for
// runtime failures (exit code 1).  Every command requires a seed; identical
// config + seed produces byte-identical output files.

void cmd_train(const Config& cfg);
void cmd_evaluate(const Config& cfg);
void cmd_crossval(const Config& cfg);
void cmd_resample(const Config& cfg);
void cmd_explain(const Config& cfg);

}  // namespace multitox

#endif

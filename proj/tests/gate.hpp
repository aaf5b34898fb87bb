#pragma once

// Gate for tests that need trained checkpoints (tau0.bfun/tau1.bfun/tau2.bfun
// in $VPRED_MODELS_DIR). Absent checkpoints skip the test body.

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

namespace gate {

inline std::optional<std::string> model_path(const char* name) {
    const char* dir = std::getenv("VPRED_MODELS_DIR");
    if (dir == nullptr || dir[0] == '\0') {
        return std::nullopt;
    }
    const std::string path = std::string(dir) + "/" + name;
    if (!std::filesystem::exists(path)) {
        return std::nullopt;
    }
    return path;
}

}  // namespace gate

#define REQUIRE_TRAINED_MODEL(var, name)                                          \
    auto var##_path = gate::model_path(name);                                     \
    if (!var##_path) {                                                            \
        MESSAGE("skipped: set VPRED_MODELS_DIR with " name " to run this check"); \
        return;                                                                   \
    }                                                                             \
    vpred::DenoiserModel var = vpred::load_model(*var##_path)

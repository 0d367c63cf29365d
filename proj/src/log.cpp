#include "dspsd/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>

namespace dspsd {

std::shared_ptr<spdlog::logger> logger() {
    static std::shared_ptr<spdlog::logger> instance = [] {
        auto log = spdlog::stderr_logger_mt("dspsd");
        log->set_pattern("[%l] %v");
        const char* env = std::getenv("DSPSD_LOG");
        const std::string level = env ? env : "info";
        if (level == "error") {
            log->set_level(spdlog::level::err);
        } else if (level == "debug") {
            log->set_level(spdlog::level::debug);
        } else {
            log->set_level(spdlog::level::info);
        }
        return log;
    }();
    return instance;
}

}  // namespace dspsd

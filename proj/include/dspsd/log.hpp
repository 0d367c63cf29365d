#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace dspsd {

// stderr logger whose level comes from DSPSD_LOG (error|info|debug, default
// info).
std::shared_ptr<spdlog::logger> logger();

}  // namespace dspsd

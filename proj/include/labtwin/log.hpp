#pragma once

namespace labtwin {

// Sets the spdlog level from LABTWIN_LOG (error|info|debug); defaults to
// info. Log output goes to stderr.
void init_logging_from_env();

} // namespace labtwin

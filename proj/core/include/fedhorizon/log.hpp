#pragma once

namespace fedhorizon {

/// Routes library logging to stderr at the level named by FEDHORIZON_LOG
/// (spdlog level names: trace, debug, info, warn, error, critical, off;
/// default info). Unknown values fall back to info.
void configure_logging();

}  // namespace fedhorizon

#pragma once

namespace prospect {

inline const char* version_string() { return "0.1.0"; }

} // namespace prospect

#pragma once

namespace geofield {

// Entry point behind the command line tool. Returns 0 on success, 1 on
// runtime/domain errors (single-line message on stderr), 2 on usage errors.
int cli_dispatch(int argc, const char* const* argv);

}  // namespace geofield

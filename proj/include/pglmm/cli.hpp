#pragma once

namespace pglmm {

// Exit status: 0 success, 2 usage error, 1 runtime failure.
int cli_dispatch(int argc, char** argv);

}  // namespace pglmm

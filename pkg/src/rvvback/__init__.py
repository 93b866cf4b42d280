"""rvvback: backport RISC-V Vector v1.0 assembly to v0.7.1.

Library layout:

- asmtext:    lossless assembly parsing and emission
- isa:        vtype model, mnemonic catalog, classification
- configflow: abstract interpretation of the vector configuration
- translate:  the rewrite engine
- emulator:   dual-version RVV subset interpreter
- kernels:    random kernel generation and differential checking
- report:     CSV/figure rendering for census and trial results
- cli:        the ``rvvback`` command
"""

__version__ = "0.1.0"

from .asmtext import parse_source, emit_source, ProgramUnit  # noqa: F401
from .isa import (  # noqa: F401
    TargetConfig,
    VTypeSpec,
    IsaVersion,
    classify_instruction,
    decode_vtype_tokens,
    check_v071_legal,
)
from .translate import Strategy, TranslationResult, translate_program, verify_v071_purity  # noqa: F401
from .emulator import MachineState, MemImage, EmuError, exec_program  # noqa: F401
from .kernels import KernelSpec, GenParams, generate_kernel, differential_check  # noqa: F401

"""Multi-band WaveRNN vocoder toolkit with DurIAN front-end utilities."""
from .durian import (Boundary, Phoneme, StyleCode, SymbolSequence, durian_loss, parse_symbols,
                     skip_filter, state_expand, style_code)
from .errors import (BenchContractError, DesignError, MbvocError, ParamsFormatError, ParseError,
                     ValidationError, WavFormatError)
from .multirate import AudioSignal, SubbandSignals, analyze, roundtrip_snr, synthesize
from .qmf import FilterBank, FrequencyResponse, PrototypeFilter, design_bank, design_prototype, frequency_response, modulate
from .quant import QuantizedTensor, dequantize, qmatvec, quantize
from .wavernn import (MbWaveRnnConfig, MbWaveRnnParams, PreparedModel, StepOutput, flops_per_second, generate,
                      quantize_params, sample_categorical, step, teacher_forced_nll)

__version__ = "0.1.0"

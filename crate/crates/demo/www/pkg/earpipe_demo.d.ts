/* tslint:disable */
/* eslint-disable */

/**
 * A noisy synthetic ECG, its planted beats and the detected beats.
 */
export class BeatDemo {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly detected: Float64Array;
    readonly precision: number;
    readonly rate: number;
    readonly sensitivity: number;
    readonly signal: Float64Array;
    readonly truth: Float64Array;
}

/**
 * Channel-mean spectra (dB) of the open and closed segments.
 */
export class BergerPsd {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Closed minus open, median over the 8–12 Hz bins.
     */
    readonly alpha_gain_db: number;
    readonly closed_db: Float64Array;
    readonly freqs: Float64Array;
    readonly open_db: Float64Array;
}

/**
 * Synthesizes a four-channel session with the given closed/open alpha ratio
 * and returns Welch spectra per condition.
 */
export function berger_psd(closed_ratio: number, seed: number): BergerPsd;

/**
 * Twenty seconds of ECG at 250 Hz with white noise at `snr_db` relative to
 * the mean signal power, run through QRS detection.
 */
export function detect_beats(bpm: number, snr_db: number, seed: number): BeatDemo;

/**
 * Magnitude response in dB at `points` frequencies from 0 to Nyquist.
 * `kind` is `"highpass"` or `"lowpass"`.
 */
export function fir_response(kind: string, cutoff: number, order: number, rate: number, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_beatdemo_free: (a: number, b: number) => void;
    readonly __wbg_bergerpsd_free: (a: number, b: number) => void;
    readonly beatdemo_detected: (a: number) => [number, number];
    readonly beatdemo_precision: (a: number) => number;
    readonly beatdemo_rate: (a: number) => number;
    readonly beatdemo_sensitivity: (a: number) => number;
    readonly beatdemo_signal: (a: number) => [number, number];
    readonly beatdemo_truth: (a: number) => [number, number];
    readonly berger_psd: (a: number, b: number) => [number, number, number];
    readonly bergerpsd_closed_db: (a: number) => [number, number];
    readonly bergerpsd_freqs: (a: number) => [number, number];
    readonly bergerpsd_open_db: (a: number) => [number, number];
    readonly detect_beats: (a: number, b: number, c: number) => [number, number, number];
    readonly fir_response: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly bergerpsd_alpha_gain_db: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;

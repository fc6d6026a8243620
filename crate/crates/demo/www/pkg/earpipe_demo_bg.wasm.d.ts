/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_beatdemo_free: (a: number, b: number) => void;
export const __wbg_bergerpsd_free: (a: number, b: number) => void;
export const beatdemo_detected: (a: number) => [number, number];
export const beatdemo_precision: (a: number) => number;
export const beatdemo_rate: (a: number) => number;
export const beatdemo_sensitivity: (a: number) => number;
export const beatdemo_signal: (a: number) => [number, number];
export const beatdemo_truth: (a: number) => [number, number];
export const berger_psd: (a: number, b: number) => [number, number, number];
export const bergerpsd_closed_db: (a: number) => [number, number];
export const bergerpsd_freqs: (a: number) => [number, number];
export const bergerpsd_open_db: (a: number) => [number, number];
export const detect_beats: (a: number, b: number, c: number) => [number, number, number];
export const fir_response: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const bergerpsd_alpha_gain_db: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;

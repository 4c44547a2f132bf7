export { encodePveb, decodePveb, FORMAT_VERSION, PVEB_MAGIC } from './format.js';
export type { EmbeddingRecord, PvebContents } from './format.js';
export { createEncoder, registerEncoder, DEFAULT_ENCODER } from './encoder.js';
export type { ImageEncoder } from './encoder.js';
export { decodeImage, resizeBilinear, centerCrop, standardPreprocess } from './image.js';
export type { RgbaImage } from './image.js';
export { readManifest, MANIFEST_COLUMNS } from './manifest.js';
export { embedDirectory } from './embed.js';
export type { EmbedOptions, EmbedSummary } from './embed.js';

export { FormatError, FeatureMap, featureMap, encodeFmap, decodeFmap,
         FMAP_MAGIC, FMAP_VERSION } from './fmap.js';
export { RgbImage, decodePpm, encodePpm, resizeImage, resizeToLongSide } from './ppm.js';
export { Backbone, Layer, LayerKind, RfParams, forwardToLayer, loadBackbone,
         rfParams, seededRng, standInBackbone } from './backbone.js';
export { NetworkSpecFiles, emitNetworkSpec } from './networkSpec.js';
export { Manifest, ManifestImage, ManifestQuery, exportManifest,
         manifestJson } from './groundTruth.js';
export { ExportIndex, ExportJob, ExportedFile, exportFmaps } from './export.js';

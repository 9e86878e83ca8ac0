/** Shared wire and UI types. Angles are degrees everywhere in the UI. */

export interface ViewState {
  frame: string
  lat: number
  lon: number
  fovH: number
  fovW: number
  d: number
  canvasW: number
  canvasH: number
}

export interface FrameInfo {
  id: string
  width: number
  height: number
}

export interface BfovJson {
  lat: number
  lon: number
  dlat: number
  dlon: number
}

export interface BoxJson {
  cx: number
  cy: number
  w: number
  h: number
  wraps: boolean
}

export interface AnnotationObject {
  label: string
  kind: 'bfov' | 'box'
  source: 'bfov-derived' | 'corrected'
  bfov?: BfovJson
  box?: BoxJson
}

export interface FrameAnnotationsJson {
  version: number
  id: string
  width: number
  height: number
  objects: AnnotationObject[]
}

export interface DetectionJson {
  label: string
  score: number
  window: number
  dist: number
  box: BoxJson
}

export interface DetectionFileJson {
  frames: {
    id: string
    width: number
    height: number
    detections: DetectionJson[]
  }[]
}

/** Rectangle in canvas pixels, top-left anchored. */
export interface CanvasRect {
  x: number
  y: number
  w: number
  h: number
}

export interface SpherePoint {
  lat: number
  lon: number
}

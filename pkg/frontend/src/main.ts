/** DOM wiring for the annotator: canvas, pan/zoom/draw, save, overlays. */

import { ApiClient } from './api.js'
import { bfovObject, draftToBfov, saveWithRetry } from './annotate.js'
import { ViewRenderer } from './render.js'
import { annotationToViewRect, boxToViewRect } from './overlay.js'
import type {
  AnnotationObject,
  CanvasRect,
  DetectionFileJson,
  DetectionJson,
  FrameInfo,
  ViewState,
} from './types.js'
import {
  FOV_PRESETS,
  isOffCenter,
  panView,
  withFovPreset,
  withProjection,
  zoomView,
} from './view.js'

const DEFAULT_LABELS = ['person', 'car', 'boat']

interface OverlayRect {
  rect: CanvasRect
  label: string
  score?: number
  color: string
}

class AnnotatorApp {
  private api = new ApiClient('')
  private canvas = document.getElementById('view') as HTMLCanvasElement
  private ctx = this.canvas.getContext('2d')!
  private frameSelect = document.getElementById('frame') as HTMLSelectElement
  private labelInput = document.getElementById('label') as HTMLInputElement
  private projSelect = document.getElementById('projection') as HTMLSelectElement
  private status = document.getElementById('status') as HTMLElement
  private guard = document.getElementById('guard') as HTMLElement
  private listing = document.getElementById('annotations') as HTMLElement

  private frames: FrameInfo[] = []
  private view: ViewState = {
    frame: '',
    lat: 0,
    lon: 0,
    fovH: 90,
    fovW: 90,
    d: 0,
    canvasW: 640,
    canvasH: 640,
  }
  private background: ImageBitmap | null = null
  private renderer = new ViewRenderer(
    this.api,
    (blob) => void this.acceptFrame(blob),
    (error) => this.toast(`render failed: ${error}`),
  )
  private version = 0
  private objects: AnnotationObject[] = []
  private detections: DetectionJson[] = []
  private overlays: OverlayRect[] = []
  private draft: CanvasRect | null = null
  private dragStart: { x: number; y: number; mode: 'pan' | 'draw' } | null = null
  private labelIndex = 0

  async start(): Promise<void> {
    this.canvas.width = this.view.canvasW
    this.canvas.height = this.view.canvasH
    this.frames = await this.api.frames()
    for (const frame of this.frames) {
      const option = document.createElement('option')
      option.value = frame.id
      option.textContent = `${frame.id} (${frame.width}x${frame.height})`
      this.frameSelect.appendChild(option)
    }
    if (this.frames.length > 0) {
      await this.selectFrame(this.frames[0].id)
    }
    this.bindEvents()
  }

  private currentFrame(): FrameInfo | undefined {
    return this.frames.find((f) => f.id === this.view.frame)
  }

  private async acceptFrame(blob: Blob): Promise<void> {
    this.background = await createImageBitmap(blob)
    this.redraw()
  }

  private async selectFrame(id: string): Promise<void> {
    this.view = { ...this.view, frame: id, lat: 0, lon: 0 }
    this.frameSelect.value = id
    await this.reloadAnnotations()
    await this.repaint()
  }

  private async reloadAnnotations(): Promise<void> {
    const body = await this.api.getAnnotations(this.view.frame)
    this.version = body.version
    this.objects = body.objects
    this.renderListing()
    await this.refreshOverlays()
  }

  private async repaint(): Promise<void> {
    await this.renderer.render(this.view)
    await this.refreshOverlays()
  }

  private async refreshOverlays(): Promise<void> {
    const frame = this.currentFrame()
    if (!frame) return
    const next: OverlayRect[] = []
    for (const entry of this.objects) {
      const rect = await annotationToViewRect(
        this.api, this.view, entry, frame.width, frame.height,
      )
      if (rect) next.push({ rect, label: entry.label, color: '#38e06d' })
    }
    for (const det of this.detections) {
      const rect = await boxToViewRect(
        this.api, this.view, det.box, frame.width, frame.height,
      )
      if (rect) {
        next.push({ rect, label: det.label, score: det.score, color: '#4aa8ff' })
      }
    }
    this.overlays = next
    this.redraw()
  }

  private redraw(): void {
    const { ctx } = this
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height)
    if (this.background) ctx.drawImage(this.background, 0, 0)
    for (const overlay of this.overlays) {
      ctx.strokeStyle = overlay.color
      ctx.lineWidth = 2
      ctx.strokeRect(overlay.rect.x, overlay.rect.y, overlay.rect.w, overlay.rect.h)
      ctx.fillStyle = overlay.color
      ctx.font = '12px sans-serif'
      const tag =
        overlay.score === undefined
          ? overlay.label
          : `${overlay.label} ${overlay.score.toFixed(2)}`
      ctx.fillText(tag, overlay.rect.x + 2, overlay.rect.y - 3)
    }
    if (this.draft) {
      ctx.strokeStyle = '#ffdd33'
      ctx.setLineDash([6, 4])
      ctx.strokeRect(this.draft.x, this.draft.y, this.draft.w, this.draft.h)
      ctx.setLineDash([])
    }
    this.guard.hidden = !(this.draft && isOffCenter(this.draft, this.view))
  }

  private renderListing(): void {
    this.listing.textContent = ''
    this.objects.forEach((entry, index) => {
      const row = document.createElement('div')
      const geom = entry.bfov
        ? `(${entry.bfov.lat.toFixed(1)}, ${entry.bfov.lon.toFixed(1)}) ` +
          `${entry.bfov.dlat.toFixed(1)}x${entry.bfov.dlon.toFixed(1)}`
        : 'box'
      row.textContent = `${index + 1}. ${entry.label} ${geom} [${entry.source}]`
      this.listing.appendChild(row)
    })
  }

  private toast(message: string): void {
    this.status.textContent = message
    setTimeout(() => {
      if (this.status.textContent === message) this.status.textContent = ''
    }, 4000)
  }

  private bindEvents(): void {
    this.frameSelect.addEventListener('change', () => {
      void this.selectFrame(this.frameSelect.value)
    })
    this.projSelect.addEventListener('change', () => {
      this.view = withProjection(this.view, Number(this.projSelect.value))
      void this.repaint()
    })
    for (const fov of FOV_PRESETS) {
      document.getElementById(`fov${fov}`)?.addEventListener('click', () => {
        this.view = withFovPreset(this.view, fov)
        void this.repaint()
      })
    }
    document.getElementById('save')?.addEventListener('click', () => {
      void this.saveDraft()
    })
    document.getElementById('detfile')?.addEventListener('change', (event) => {
      const input = event.target as HTMLInputElement
      const file = input.files?.[0]
      if (file) void this.loadDetections(file)
    })

    this.canvas.addEventListener('mousedown', (event) => {
      this.dragStart = {
        x: event.offsetX,
        y: event.offsetY,
        mode: event.shiftKey ? 'draw' : 'pan',
      }
    })
    this.canvas.addEventListener('mousemove', (event) => {
      if (!this.dragStart) return
      if (this.dragStart.mode === 'pan') {
        const dx = event.offsetX - this.dragStart.x
        const dy = event.offsetY - this.dragStart.y
        this.dragStart = { ...this.dragStart, x: event.offsetX, y: event.offsetY }
        this.view = panView(this.view, dx, dy)
        void this.repaint()
      } else {
        this.draft = normalizedRect(this.dragStart, event.offsetX, event.offsetY)
        this.redraw()
      }
    })
    window.addEventListener('mouseup', () => {
      this.dragStart = null
    })
    this.canvas.addEventListener('wheel', (event) => {
      event.preventDefault()
      this.view = zoomView(this.view, event.deltaY > 0 ? 1.1 : 1 / 1.1)
      void this.repaint()
    })
    window.addEventListener('keydown', (event) => {
      if (event.target instanceof HTMLInputElement) return
      if (event.key === '1') this.view = withFovPreset(this.view, 90)
      else if (event.key === '2') this.view = withFovPreset(this.view, 120)
      else if (event.key === '3') this.view = withFovPreset(this.view, 150)
      else if (event.key === 'l') {
        this.labelIndex = (this.labelIndex + 1) % DEFAULT_LABELS.length
        this.labelInput.value = DEFAULT_LABELS[this.labelIndex]
        return
      } else if (event.key === 'Enter') {
        void this.saveDraft()
        return
      } else return
      void this.repaint()
    })
  }

  private async saveDraft(): Promise<void> {
    if (!this.draft) {
      this.toast('draw a box first (shift+drag)')
      return
    }
    const label = this.labelInput.value.trim() || DEFAULT_LABELS[0]
    try {
      const bfov = await draftToBfov(this.api, this.view, this.draft)
      const result = await saveWithRetry(
        this.api, this.view.frame, this.version, this.objects, bfovObject(label, bfov),
      )
      this.version = result.version
      this.objects = result.objects
      this.draft = null
      if (result.retried) this.toast('saved after refreshing a stale version')
      this.renderListing()
      await this.refreshOverlays()
    } catch (error) {
      this.toast(`save failed: ${error}`)
    }
  }

  private async loadDetections(file: File): Promise<void> {
    try {
      const body = JSON.parse(await file.text()) as DetectionFileJson
      const entry = body.frames.find((f) => f.id === this.view.frame)
      this.detections = entry ? entry.detections : []
      await this.refreshOverlays()
      this.toast(`${this.detections.length} detections loaded`)
    } catch (error) {
      this.detections = []
      this.toast(`bad detection file: ${error}`)
    }
  }
}

function normalizedRect(
  start: { x: number; y: number },
  x: number,
  y: number,
): CanvasRect {
  return {
    x: Math.min(start.x, x),
    y: Math.min(start.y, y),
    w: Math.abs(x - start.x),
    h: Math.abs(y - start.y),
  }
}

void new AnnotatorApp().start()

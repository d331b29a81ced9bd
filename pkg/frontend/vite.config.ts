import { defineConfig } from 'vite';

// The dev server proxies /api to a locally running `relevis serve`;
// production builds are served by the backend itself via --static.
export default defineConfig({
  server: {
    proxy: {
      '/api': 'http://127.0.0.1:8000'
    }
  },
  build: {
    outDir: 'dist',
    sourcemap: false
  }
});
